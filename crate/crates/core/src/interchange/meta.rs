use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Side;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Healthy,
    Patient,
}

/// Which side of a patient a recording shows: more- or less-impaired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Impairment {
    #[serde(rename = "MI")]
    More,
    #[serde(rename = "LI")]
    Less,
    #[serde(rename = "none")]
    None,
}

impl Impairment {
    pub fn label(self) -> &'static str {
        match self {
            Impairment::More => "MI",
            Impairment::Less => "LI",
            Impairment::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording: String,
    pub subject: String,
    pub cohort: Cohort,
    pub side: Side,
    pub impairment: Impairment,
    pub fps: f64,
    #[serde(default = "first_session")]
    pub session: u32,
}

fn first_session() -> u32 {
    1
}

impl RecordingMeta {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.cohort {
            Cohort::Healthy => self.impairment == Impairment::None,
            Cohort::Patient => self.impairment != Impairment::None,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "recording '{}': {:?} cohort cannot carry impairment '{}'",
                self.recording,
                self.cohort,
                self.impairment.label()
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("recording '{}': bad fps", self.recording)));
        }
        Ok(())
    }
}

pub fn read_meta(path: &Path) -> Result<RecordingMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: RecordingMeta = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    meta.validate()?;
    Ok(meta)
}

/// Reads a cohort file: a JSON array of recording metadata.
pub fn read_meta_list(path: &Path) -> Result<Vec<RecordingMeta>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let metas: Vec<RecordingMeta> = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    for m in &metas {
        m.validate()?;
    }
    Ok(metas)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Invariant(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patient_requires_impairment() {
        let m: RecordingMeta = serde_json::from_str(
            r#"{"recording":"P1-MI","subject":"P1","cohort":"patient","side":"left","impairment":"none","fps":22}"#,
        )
        .unwrap();
        assert!(m.validate().is_err());
        assert_eq!(m.session, 1);
    }

    #[test]
    fn healthy_round_trip() {
        let m = RecordingMeta {
            recording: "H01".into(),
            subject: "H01".into(),
            cohort: Cohort::Healthy,
            side: Side::Right,
            impairment: Impairment::None,
            fps: 22.0,
            session: 1,
        };
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""impairment":"none""#));
        let back: RecordingMeta = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
    }
}
