//! Cross-modal similarity scorers.
//!
//! A scorer maps `(query, tile)` to one finite real. Built-in synthetic
//! scorers allow model-free runs and metric calibration; external scorers
//! speak a newline-delimited JSON protocol over a child process's stdio.

mod builtin;
mod external;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use builtin::{ConstantScorer, GaussianTargetScorer, GtOracleScorer, SeededRandomScorer};
pub use external::{
    spawn_external_scorer, ExternalOptions, ExternalScorer, ExternalSession, Handshake, PayloadMode, PROTOCOL_VERSION,
};

use crate::annotations::Point;
use crate::error::{Error, Result, ScorerError};
use crate::io::RasterRef;
use crate::map::Mask;
use crate::pipeline::Tile;

/// One scoring call: a query against a list of tiles of one image.
#[derive(Debug, Clone, Copy)]
pub struct ScoreBatch<'a> {
    pub query: &'a str,
    pub image: &'a RasterRef,
    pub tiles: &'a [Tile],
    /// Base64 PNG crops, aligned with `tiles`, when the scorer asked for them.
    pub payloads: Option<&'a [String]>,
}

pub trait Scorer: Send {
    fn name(&self) -> &str;

    /// Whether the pipeline should cut pixel payloads for this scorer.
    fn wants_payloads(&self) -> bool {
        false
    }

    /// Returns one score per tile, order-aligned with `batch.tiles`.
    fn score_tiles(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError>;
}

/// Scores tiles and checks the scorer's output contract.
pub fn score_tiles(scorer: &mut dyn Scorer, batch: &ScoreBatch<'_>) -> Result<Vec<f64>> {
    let scores = scorer.score_tiles(batch)?;
    if scores.len() != batch.tiles.len() {
        return Err(Error::LengthMismatch {
            what: "scorer output vs tiles",
            left: scores.len(),
            right: batch.tiles.len(),
        });
    }
    if let Some((index, &score)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
        return Err(ScorerError::NonFinite { index, score }.into());
    }
    Ok(scores)
}

/// Declarative scorer choice, as written on the command line or in a
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerSpec {
    Constant {
        value: f64,
    },
    /// Uniform scores in `[0, 1)` derived from the seed and tile geometry.
    /// Without an explicit seed the run seed is used.
    SeededRandom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Fraction of the tile covered by the case's ground truth.
    GtOracle,
    /// `exp(-d^2 / (2 sigma^2))` of the tile-center distance to the target.
    /// Without an explicit target, the nearest ground-truth center is used.
    GaussianTarget {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Point>,
        sigma: f64,
    },
    External {
        command: Vec<String>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        env: BTreeMap<String, String>,
        #[serde(default)]
        options: ExternalOptions,
    },
}

impl ScorerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match self {
            ScorerSpec::Constant { value } if !value.is_finite() => bad(format!("constant {value} is not finite")),
            ScorerSpec::GaussianTarget { sigma, .. } if !(*sigma > 0.0 && sigma.is_finite()) => {
                bad(format!("gaussian sigma must be positive, got {sigma}"))
            }
            ScorerSpec::GaussianTarget { target: Some(p), .. } if !(p.x.is_finite() && p.y.is_finite()) => {
                bad("gaussian target must be finite".into())
            }
            ScorerSpec::External { command, .. } if command.is_empty() => bad("external command is empty".into()),
            ScorerSpec::External { options, .. } if options.batch == 0 => bad("external batch must be >= 1".into()),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScorerSpec::Constant { .. } => "constant",
            ScorerSpec::SeededRandom { .. } => "seeded-random",
            ScorerSpec::GtOracle => "gt-oracle",
            ScorerSpec::GaussianTarget { .. } => "gaussian-target",
            ScorerSpec::External { .. } => "external",
        }
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Constant { value } => write!(f, "constant:{value}"),
            ScorerSpec::SeededRandom { seed: None } => f.write_str("seeded-random"),
            ScorerSpec::SeededRandom { seed: Some(s) } => write!(f, "seeded-random:{s}"),
            ScorerSpec::GtOracle => f.write_str("gt-oracle"),
            ScorerSpec::GaussianTarget { target: None, sigma } => write!(f, "gaussian-target:{sigma}"),
            ScorerSpec::GaussianTarget { target: Some(p), sigma } => {
                write!(f, "gaussian-target:{},{},{sigma}", p.x, p.y)
            }
            ScorerSpec::External { command, .. } => write!(f, "external:{}", command.join(" ")),
        }
    }
}

impl FromStr for ScorerSpec {
    type Err = Error;

    /// Accepts `constant:<v>`, `seeded-random[:<seed>]`, `gt-oracle`,
    /// `gaussian-target:<sigma>`, `gaussian-target:<x>,<y>,<sigma>`,
    /// `external:<program> [args...]`, or a JSON object.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let spec = if s.starts_with('{') {
            serde_json::from_str(s)?
        } else {
            let (kind, arg) = match s.split_once(':') {
                Some((k, a)) => (k, Some(a.trim())),
                None => (s, None),
            };
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad number {t:?} in scorer {s:?}")))
            };
            match (kind, arg) {
                ("constant", Some(v)) => ScorerSpec::Constant { value: num(v)? },
                ("seeded-random" | "random", None) => ScorerSpec::SeededRandom { seed: None },
                ("seeded-random" | "random", Some(v)) => ScorerSpec::SeededRandom {
                    seed: Some(v.parse().map_err(|_| Error::InvalidConfig(format!("bad seed {v:?}")))?),
                },
                ("gt-oracle", None) => ScorerSpec::GtOracle,
                ("gaussian-target" | "gaussian", Some(v)) => {
                    let parts: Vec<&str> = v.split(',').collect();
                    match parts[..] {
                        [sigma] => ScorerSpec::GaussianTarget {
                            target: None,
                            sigma: num(sigma)?,
                        },
                        [x, y, sigma] => ScorerSpec::GaussianTarget {
                            target: Some(Point::new(num(x)?, num(y)?)),
                            sigma: num(sigma)?,
                        },
                        _ => return Err(Error::InvalidConfig(format!("bad gaussian-target arguments {v:?}"))),
                    }
                }
                ("external", Some(cmd)) => ScorerSpec::External {
                    command: cmd.split_whitespace().map(str::to_string).collect(),
                    env: BTreeMap::new(),
                    options: ExternalOptions::default(),
                },
                _ => return Err(Error::InvalidConfig(format!("unrecognized scorer {s:?}"))),
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// What a scorer may know about the case it scores.
#[derive(Debug, Clone, Copy)]
pub struct CaseContext<'a> {
    pub case_id: &'a str,
    pub height: usize,
    pub width: usize,
    /// Union of the ground-truth regions; required by `gt-oracle`.
    pub gt_mask: Option<&'a Mask>,
    /// Vertex centroids of the ground-truth regions.
    pub gt_centers: &'a [Point],
    pub seed: u64,
}

/// Instantiates scorers per case and pools external sessions across cases.
#[derive(Debug)]
pub struct ScorerFactory {
    spec: ScorerSpec,
    pool: Arc<Mutex<Vec<ExternalSession>>>,
}

impl ScorerFactory {
    pub fn new(spec: ScorerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            pool: Arc::default(),
        })
    }

    pub fn spec(&self) -> &ScorerSpec {
        &self.spec
    }

    pub fn instantiate(&self, ctx: &CaseContext<'_>) -> Result<Box<dyn Scorer>> {
        Ok(match &self.spec {
            ScorerSpec::Constant { value } => Box::new(ConstantScorer::new(*value)),
            ScorerSpec::SeededRandom { seed } => {
                let base = seed.unwrap_or(ctx.seed);
                Box::new(SeededRandomScorer::new(derive_seed(base, ctx.case_id)))
            }
            ScorerSpec::GtOracle => {
                let mask = ctx
                    .gt_mask
                    .ok_or_else(|| ScorerError::Unavailable("gt-oracle needs a ground-truth mask".into()))?;
                Box::new(GtOracleScorer::new(mask))
            }
            ScorerSpec::GaussianTarget { target, sigma } => {
                let targets = match target {
                    Some(p) => vec![*p],
                    None if ctx.gt_centers.is_empty() => {
                        return Err(ScorerError::Unavailable("gaussian-target has no target".into()).into())
                    }
                    None => ctx.gt_centers.to_vec(),
                };
                Box::new(GaussianTargetScorer::new(targets, *sigma))
            }
            ScorerSpec::External { command, env, options } => {
                let pooled = self.pool.lock().expect("pool poisoned").pop();
                let session = match pooled {
                    Some(s) => s,
                    None => spawn_external_scorer(command, env, options.clone())?,
                };
                Box::new(ExternalScorer::new(session, Arc::clone(&self.pool)))
            }
        })
    }
}

/// Stable per-case seed: FNV-1a over the base seed and the case id.
pub fn derive_seed(base: u64, case_id: &str) -> u64 {
    let mut h = fnv1a64(&base.to_le_bytes(), FNV_OFFSET);
    h = fnv1a64(case_id.as_bytes(), h);
    h
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a64(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

pub(crate) fn default_timeout() -> Duration {
    Duration::from_secs(30)
}
