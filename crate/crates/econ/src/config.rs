//! Run configuration: a sectioned TOML file, overridable per key through
//! `ECON_<SECTION>__<KEY>` environment variables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use econ_core::experiment::{ExperimentConfig, FilterConfig, PretrainConfig, SplitConfig, TextConfig};
use econ_core::ingest::{LabelConfig, SynthConfig};
use econ_core::predictor::{Ablation, PredictorConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{EconError, Result};

pub const ENV_PREFIX: &str = "ECON_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Generate a planted-signal dataset into the run directory.
    Synth,
    /// Read the files named in `[data]`.
    Files,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Lexicon,
    /// Use the `sentiment` field carried by every tweet.
    Import,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub ablations: Vec<Ablation>,
    pub scorer: ScorerKind,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            out_dir: PathBuf::from("runs/default"),
            ablations: Ablation::ALL.to_vec(),
            scorer: ScorerKind::Lexicon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub source: DataSource,
    pub prices: PathBuf,
    pub tweets: PathBuf,
    #[serde(rename = "macro")]
    pub macro_series: PathBuf,
    pub sectors: PathBuf,
    /// Raw overlapping trend windows; empty for none.
    pub trend_windows: PathBuf,
    pub trading_hours: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Synth,
            prices: PathBuf::from("prices.csv"),
            tweets: PathBuf::from("tweets.jsonl"),
            macro_series: PathBuf::from("macro.csv"),
            sectors: PathBuf::from("sectors.csv"),
            trend_windows: PathBuf::from("trend_windows.csv"),
            trading_hours: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub synth: SynthConfig,
    pub labels: LabelConfig,
    pub split: SplitConfig,
    pub filter: FilterConfig,
    pub text: TextConfig,
    pub pretrain: PretrainConfig,
    pub predictor: PredictorConfig,
}

/// One-line descriptions printed above each key by `econ config --defaults`.
const DOCS: &[(&str, &str, &str)] = &[
    ("run", "seed", "root seed; every stage derives its own seed from it"),
    ("run", "out_dir", "artifact directory"),
    ("run", "ablations", "model variants to train: full, A (no micro), I (no macro), none"),
    ("run", "scorer", "tweet sentiment: lexicon, or import to use each tweet's sentiment field"),
    ("data", "source", "synth generates data into <out_dir>/data; files reads the paths below"),
    ("data", "prices", "CSV: ticker,date,open,high,low,close,adj_close,volume"),
    ("data", "tweets", "JSON lines: id,tickers,text,timestamp,likes,retweets,impressions[,sentiment]"),
    ("data", "macro", "CSV: keyword,source,date,value with source trend-index or econ-series"),
    ("data", "sectors", "CSV: ticker,sector"),
    ("data", "trend_windows", "CSV: keyword,window,date,value of raw overlapping windows; empty for none"),
    ("data", "trading_hours", "drop tweets outside 9:30-16:00 New York time (ignored for synth data)"),
    ("synth", "n_stocks", "stocks; assigned to sectors round-robin"),
    ("synth", "m_sectors", "sectors, at most 10"),
    ("synth", "n_days", "trading days"),
    ("synth", "signal_strength", "in [0, 1]: return predictability and informed-tweet fidelity"),
    ("synth", "informed_rate", "mean high-impression tweets per stock-day"),
    ("synth", "noise_rate", "mean low-impression tweets per stock-day"),
    ("synth", "spam_share", "share of low-impression tweets that are promotional spam"),
    ("synth", "peer_weight", "weight of sector peers' previous-day trading flow in returns"),
    ("synth", "macro_weight", "weight of the previous day's macro factor in returns"),
    ("synth", "n_macro_keywords", "macro keywords, each with a trend index and an econ series"),
    ("synth", "daily_vol", "daily return volatility"),
    ("synth", "start", "first calendar date"),
    ("labels", "move_band", "|return| below this is excluded from movement"),
    ("labels", "vol_threshold", "|return| at or above this is abnormal volatility"),
    ("split", "train", "chronological split ratios; must sum to 1"),
    ("filter", "k", "tweets kept per stock-day: auto, all, or a positive integer"),
    ("filter", "slack", "auto picks the smallest k with V >= (1 - slack) * max V"),
    ("text", "max_len", "tokens per tweet after truncation"),
    ("text", "min_freq", "minimum training frequency for a vocabulary token"),
    ("pretrain", "k", "half-width of tweet and sector embeddings"),
    ("pretrain", "max_examples", "cap on pretraining examples; 0 keeps all"),
    ("predictor", "hidden", "GRU hidden size H"),
    ("predictor", "fused_dim", "width of the fused daily input"),
    ("predictor", "window", "lag window d, between 5 and 15"),
    ("predictor", "lambda", "volatility loss weight"),
    ("predictor", "ablation", "variant used by `econ train` when --ablation is not given"),
];

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            labels: self.labels,
            split: self.split.clone(),
            filter: self.filter.clone(),
            text: self.text.clone(),
            pretrain: self.pretrain.clone(),
            predictor: self.predictor.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment().validate().map_err(|e| EconError::Config(e.to_string()))?;
        if self.data.source == DataSource::Synth {
            self.synth.validate().map_err(|e| EconError::Config(e.to_string()))?;
        }
        if self.run.ablations.is_empty() {
            return Err(EconError::Config("run.ablations is empty".into()));
        }
        Ok(())
    }

    /// Reads `path` (defaults when `None`), applies environment overrides and
    /// validates.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<RunConfig>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| EconError::io(p, e))?;
                text.parse::<Table>().map_err(|e| EconError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        apply_env(&mut table, env)?;
        let cfg = from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("config serializes to a table")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical text of the named sections, used for stage digests.
    pub fn sections(&self, names: &[&str]) -> String {
        let table = self.to_table();
        let mut out = String::new();
        for name in names {
            if let Some((key, rest)) = name.split_once('.') {
                let v = table.get(key).and_then(|s| s.get(rest));
                let _ = writeln!(out, "{name} = {}", v.map_or("".to_string(), Value::to_string));
            } else if let Some(v) = table.get(*name) {
                let mut one = Table::new();
                one.insert((*name).to_string(), v.clone());
                out.push_str(&toml::to_string(&one).expect("table serializes"));
            }
        }
        out
    }

    /// Defaults as a commented TOML file.
    pub fn documented(&self) -> String {
        let table = self.to_table();
        let mut out = String::from("# econ run configuration\n");
        let _ = writeln!(out, "# Any key can be overridden with {ENV_PREFIX}<SECTION>__<KEY>, e.g. ECON_PREDICTOR__WINDOW=10.");
        for (section, value) in &table {
            let Value::Table(keys) = value else { continue };
            let _ = writeln!(out, "\n[{section}]");
            for (key, v) in keys {
                if let Some((_, _, doc)) = DOCS.iter().find(|(s, k, _)| s == section && k == key) {
                    let _ = writeln!(out, "# {doc}");
                }
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }
}

fn from_table(table: Table) -> Result<RunConfig> {
    check_known(&table, &RunConfig::default().to_table(), "")?;
    RunConfig::deserialize(Value::Table(table)).map_err(|e| EconError::Config(e.to_string()))
}

/// Rejects keys that do not exist in the defaults, catching typos that serde
/// defaults would silently ignore.
fn check_known(given: &Table, known: &Table, prefix: &str) -> Result<()> {
    for (key, value) in given {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (value, known.get(key)) {
            (_, None) => return Err(EconError::Config(format!("unknown key `{path}`"))),
            (Value::Table(g), Some(Value::Table(k))) => check_known(g, k, &path)?,
            (Value::Table(_), Some(_)) => return Err(EconError::Config(format!("`{path}` is not a section"))),
            _ => {}
        }
    }
    Ok(())
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `ECON_<SECTION>__<KEY>=value` overrides.
pub fn apply_env<I>(table: &mut Table, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    overrides.sort();
    for (name, raw) in overrides {
        let rest = &name[ENV_PREFIX.len()..];
        let Some((section, key)) = rest.split_once("__") else {
            return Err(EconError::Config(format!("{name}: expected {ENV_PREFIX}<SECTION>__<KEY>")));
        };
        let (section, key) = (section.to_ascii_lowercase(), key.to_ascii_lowercase());
        let entry = table.entry(section.clone()).or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(sec) = entry else {
            return Err(EconError::Config(format!("{name}: `{section}` is not a section")));
        };
        sec.insert(key, parse_value(&raw));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_documented_text() {
        let cfg = RunConfig::default();
        let table: Table = cfg.documented().parse().unwrap();
        assert_eq!(from_table(table).unwrap(), cfg);
    }

    #[test]
    fn env_values_parse_as_literals() {
        assert_eq!(parse_value("10"), Value::Integer(10));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("true"), Value::Boolean(true));
        assert_eq!(parse_value("auto"), Value::String("auto".into()));
        assert_eq!(parse_value("\"3\""), Value::String("3".into()));
    }
}
