//! Pipeline settings: TOML file first, then command-line flags.

use std::path::Path;

use bbt_core::pipeline::PipelineConfig;

use crate::PipelineArgs;

pub fn load(path: &Path) -> Result<PipelineConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<PipelineConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub fn resolve(args: &PipelineArgs, jobs: Option<usize>) -> Result<PipelineConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &args.data {
        cfg.data = v.clone();
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = args.space {
        cfg.space = v;
    }
    if let Some(v) = args.baseline {
        cfg.baseline = v;
    }
    if let Some(v) = &args.skeleton {
        cfg.skeleton = Some(v.clone());
    }
    if let Some(v) = jobs {
        cfg.jobs = v;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bbt_core::features::ScoringSpace;
    use bbt_core::scoring::BaselineMode;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn file_values_read() {
        let c = parse("tau = 0.8\nk = 10\nspace = \"raw18\"\nbaseline = \"all-pairs\"\ndata = \"d\"\n").unwrap();
        assert_eq!(c.tau, 0.8);
        assert_eq!(c.k, 10);
        assert_eq!(c.space, ScoringSpace::Raw);
        assert_eq!(c.baseline, BaselineMode::AllPairs);
        assert_eq!(c.data, Path::new("d"));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse("tua = 0.8").is_err());
    }

    #[test]
    fn flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.toml");
        std::fs::write(&f, "k = 10\ntau = 0.8\n").unwrap();
        let args = PipelineArgs {
            config: Some(f),
            k: Some(7),
            ..Default::default()
        };
        let c = resolve(&args, Some(2)).unwrap();
        assert_eq!((c.k, c.tau, c.jobs), (7, 0.8, 2));
    }

    #[test]
    fn out_of_range_rejected() {
        let args = PipelineArgs {
            threshold: Some(1.5),
            ..Default::default()
        };
        assert!(resolve(&args, None).is_err());
    }
}
