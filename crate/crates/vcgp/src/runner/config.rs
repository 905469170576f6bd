//! Flat key=value run configuration with layered overrides.
//!
//! Precedence, lowest to highest: built-in defaults, the configuration file,
//! command-line settings. Unknown keys are rejected at parse time so a typo
//! never silently falls back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::combiner::{BlockPolicy, CombineMethod};
use crate::error::{Result, VcgpError};
use crate::kernels::{KernelConfig, KernelFamily, PriorRange};
use crate::sampler::ChainConfig;

/// Every key the configuration layer accepts.
const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "test_dataset",
    "truth",
    "out",
    "run",
    "n",
    "n_test",
    "m",
    "k",
    "seed",
    "workers",
    "iterations",
    "burn_in",
    "thin",
    "ess_scale",
    "joint_ess",
    "kernel",
    "phi_lower",
    "phi_upper",
    "psi_lower",
    "psi_upper",
    "kappa_lower",
    "kappa_upper",
    "fitc_rank",
    "fitc_grid",
    "methods",
    "block_policy",
];

/// Ordered key=value pairs; later inserts win on lookup.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                VcgpError::Format(format!("line {}: expected key=value, got '{line}'", i + 1))
            })?;
            map.set_checked(k.trim(), v.trim(), i + 1)?;
        }
        Ok(map)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::runner::io::io_at(path, e))?;
        Self::parse(&text)
    }

    fn set_checked(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(VcgpError::Config(format!(
                "line {line}: unknown key '{key}'"
            )));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Insert one setting, rejecting unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_checked(key, value, 0).map_err(|e| match e {
            VcgpError::Config(msg) => {
                VcgpError::Config(msg.trim_start_matches("line 0: ").to_string())
            }
            other => other,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Overlay `over` on `self`; values in `over` win.
    pub fn merged(mut self, over: &KvMap) -> KvMap {
        for (k, v) in &over.entries {
            self.entries.insert(k.clone(), v.clone());
        }
        self
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| VcgpError::Config(format!("key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(VcgpError::Config(format!(
            "key '{key}': expected a boolean, got '{other}'"
        ))),
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub test_dataset: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub n: Option<usize>,
    pub n_test: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub ess_scale: f64,
    pub joint_ess: bool,
    pub kernel: KernelFamily,
    pub phi_range: (f64, f64),
    pub psi_range: (f64, f64),
    pub kappa_range: (f64, f64),
    pub fitc_rank: Option<usize>,
    pub fitc_grid: bool,
    pub methods: Vec<CombineMethod>,
    pub block_policy: BlockPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            test_dataset: None,
            truth: None,
            out_dir: None,
            run_dir: None,
            n: None,
            n_test: None,
            m: None,
            k: None,
            seed: 1,
            workers: 1,
            iterations: 1000,
            burn_in: 500,
            thin: 1,
            ess_scale: 2.0,
            joint_ess: true,
            kernel: KernelFamily::Exponential,
            phi_range: (0.1, 10.0),
            psi_range: (0.1, 10.0),
            kappa_range: (0.1, 1.0),
            fitc_rank: None,
            fitc_grid: false,
            methods: vec![CombineMethod::Amc],
            block_policy: BlockPolicy::Auto,
        }
    }
}

impl RunConfig {
    /// Resolve defaults, then the optional file, then command-line pairs.
    pub fn resolve(file: Option<&Path>, cli: &KvMap) -> Result<RunConfig> {
        let mut map = KvMap::default();
        if let Some(path) = file {
            map = map.merged(&KvMap::from_file(path)?);
        }
        map = map.merged(cli);
        Self::from_map(&map)
    }

    pub fn from_map(map: &KvMap) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(v) = map.get("dataset") {
            cfg.dataset = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("test_dataset") {
            cfg.test_dataset = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("truth") {
            cfg.truth = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("out") {
            cfg.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("run") {
            cfg.run_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("n") {
            cfg.n = Some(parse_num("n", v)?);
        }
        if let Some(v) = map.get("n_test") {
            cfg.n_test = Some(parse_num("n_test", v)?);
        }
        if let Some(v) = map.get("m") {
            cfg.m = Some(parse_num("m", v)?);
        }
        if let Some(v) = map.get("k") {
            cfg.k = Some(parse_num("k", v)?);
        }
        if let Some(v) = map.get("seed") {
            cfg.seed = parse_num("seed", v)?;
        }
        if let Some(v) = map.get("workers") {
            cfg.workers = parse_num("workers", v)?;
        }
        if let Some(v) = map.get("iterations") {
            cfg.iterations = parse_num("iterations", v)?;
        }
        if let Some(v) = map.get("burn_in") {
            cfg.burn_in = parse_num("burn_in", v)?;
        }
        if let Some(v) = map.get("thin") {
            cfg.thin = parse_num("thin", v)?;
        }
        if let Some(v) = map.get("ess_scale") {
            cfg.ess_scale = parse_num("ess_scale", v)?;
        }
        if let Some(v) = map.get("joint_ess") {
            cfg.joint_ess = parse_bool("joint_ess", v)?;
        }
        if let Some(v) = map.get("kernel") {
            cfg.kernel = v.parse()?;
        }
        if let Some(v) = map.get("phi_lower") {
            cfg.phi_range.0 = parse_num("phi_lower", v)?;
        }
        if let Some(v) = map.get("phi_upper") {
            cfg.phi_range.1 = parse_num("phi_upper", v)?;
        }
        if let Some(v) = map.get("psi_lower") {
            cfg.psi_range.0 = parse_num("psi_lower", v)?;
        }
        if let Some(v) = map.get("psi_upper") {
            cfg.psi_range.1 = parse_num("psi_upper", v)?;
        }
        if let Some(v) = map.get("kappa_lower") {
            cfg.kappa_range.0 = parse_num("kappa_lower", v)?;
        }
        if let Some(v) = map.get("kappa_upper") {
            cfg.kappa_range.1 = parse_num("kappa_upper", v)?;
        }
        if let Some(v) = map.get("fitc_rank") {
            cfg.fitc_rank = Some(parse_num("fitc_rank", v)?);
        }
        if let Some(v) = map.get("fitc_grid") {
            cfg.fitc_grid = parse_bool("fitc_grid", v)?;
        }
        if let Some(v) = map.get("methods") {
            cfg.methods = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<_>>>()?;
            if cfg.methods.is_empty() {
                return Err(VcgpError::Config("empty method list".into()));
            }
        }
        if let Some(v) = map.get("block_policy") {
            cfg.block_policy = v.parse()?;
        }
        if cfg.workers == 0 {
            return Err(VcgpError::Config("workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Prior boxes for one coefficient under the configured family.
    pub fn kernel_config(&self) -> Result<KernelConfig> {
        let ranges = match self.kernel {
            KernelFamily::Exponential => vec![PriorRange::new(self.phi_range.0, self.phi_range.1)?],
            KernelFamily::Gneiting => vec![
                PriorRange::new(self.phi_range.0, self.phi_range.1)?,
                PriorRange::new(self.psi_range.0, self.psi_range.1)?,
                PriorRange::new(self.kappa_range.0, self.kappa_range.1)?,
            ],
        };
        let kc = KernelConfig {
            family: self.kernel,
            ranges,
        };
        kc.validate()?;
        Ok(kc)
    }

    /// One kernel configuration per varying coefficient.
    pub fn kernel_configs(&self, q: usize) -> Result<Vec<KernelConfig>> {
        let kc = self.kernel_config()?;
        Ok(vec![kc; q])
    }

    pub fn chain_config(&self) -> Result<ChainConfig> {
        let mut cc = ChainConfig::new(self.iterations, self.burn_in, self.thin, self.seed);
        cc.ess_prior_scale = self.ess_scale;
        cc.joint_ess = self.joint_ess;
        cc.validate()?;
        Ok(cc)
    }

    /// Subset-layout invariants for a distributed fit over n observations.
    pub fn validate_distributed(&self, n: usize) -> Result<(usize, usize)> {
        let m = self
            .m
            .ok_or_else(|| VcgpError::Config("distributed fit requires m".into()))?;
        let k = self
            .k
            .ok_or_else(|| VcgpError::Config("distributed fit requires k".into()))?;
        if m == 0 || k == 0 {
            return Err(VcgpError::Config("m and k must be at least 1".into()));
        }
        if m > n {
            return Err(VcgpError::Config(format!(
                "subset size m={m} exceeds the {n} available observations"
            )));
        }
        Ok((m, k))
    }

    pub fn require_dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| VcgpError::Config("missing dataset path".into()))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| VcgpError::Config("missing output directory (out=...)".into()))
    }

    pub fn require_run(&self) -> Result<&Path> {
        self.run_dir
            .as_deref()
            .ok_or_else(|| VcgpError::Config("missing run directory (run=...)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_unknown_keys_and_bad_lines() {
        assert!(KvMap::parse("seed=3\n# comment\n\nm=10").is_ok());
        let err = KvMap::parse("seed=3\nbogus_key=1").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = KvMap::parse("just words").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn command_line_beats_file_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.kv");
        std::fs::write(&path, "seed=7\niterations=200\nthin=2\n").unwrap();
        let mut cli = KvMap::default();
        cli.set("iterations", "900").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &cli).unwrap();
        assert_eq!(cfg.iterations, 900); // command line
        assert_eq!(cfg.seed, 7); // file
        assert_eq!(cfg.thin, 2); // file
        assert_eq!(cfg.burn_in, 500); // default
        assert!(cli.set("not_a_key", "1").is_err());
    }

    #[test]
    fn numbers_and_lists_must_parse() {
        let mut map = KvMap::default();
        map.set("m", "abc").unwrap();
        assert!(RunConfig::from_map(&map).is_err());

        let mut map = KvMap::default();
        map.set("methods", "amc,nope").unwrap();
        assert!(RunConfig::from_map(&map).is_err());

        let mut map = KvMap::default();
        map.set("methods", "amc, wasp,pie").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(
            cfg.methods,
            vec![CombineMethod::Amc, CombineMethod::Wasp, CombineMethod::Pie]
        );

        let mut map = KvMap::default();
        map.set("workers", "0").unwrap();
        assert!(RunConfig::from_map(&map).is_err());
    }

    #[test]
    fn large_study_subset_layout_is_accepted() {
        let mut map = KvMap::default();
        map.set("m", "500").unwrap();
        map.set("k", "10").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.validate_distributed(3000).unwrap(), (500, 10));
        assert!(cfg.validate_distributed(400).is_err());
        let bare = RunConfig::default();
        assert!(bare.validate_distributed(3000).is_err());
    }

    #[test]
    fn kernel_configuration_honours_the_family() {
        let cfg = RunConfig::default();
        let kcs = cfg.kernel_configs(3).unwrap();
        assert_eq!(kcs.len(), 3);
        assert_eq!(kcs[0].ranges.len(), 1);

        let mut map = KvMap::default();
        map.set("kernel", "gneiting").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        let kc = cfg.kernel_config().unwrap();
        assert_eq!(kc.ranges.len(), 3);

        // a kappa box reaching past 1 is rejected
        let mut map = KvMap::default();
        map.set("kernel", "gneiting").unwrap();
        map.set("kappa_upper", "1.5").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert!(cfg.kernel_config().is_err());
    }
}
