//! Concrete predictors and the registry that re-creates them from container
//! headers.

mod orderk;
mod remote;
mod uniform;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use orderk::{OrderKPredictor, OrderTooLarge, MAX_CONTEXTS, MAX_COUNTERS, MAX_ORDER};
pub use remote::{RemoteEndpoint, RemotePredictor, RemoteSession, DEFAULT_TIMEOUT, ENDPOINT_ENV};
pub use uniform::UniformPredictor;

use crate::model::{Alphabet, Predictor, PredictorDescriptor, PredictorError};

/// Order used when a remote tokenizer cannot represent the input and the
/// pipeline falls back to bytes.
pub const FALLBACK_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PredictorConfig {
    Uniform,
    OrderK {
        k: usize,
    },
    /// `endpoint: None` defers to the registry or the environment.
    Remote {
        endpoint: Option<String>,
        model_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown predictor {0:?}; expected uniform, orderk:K or remote:ENDPOINT,MODEL")]
    Unknown(String),
    #[error("bad order {0:?}; expected an integer in 0..={MAX_ORDER}")]
    BadOrder(String),
    #[error("remote predictor needs a model id")]
    MissingModel,
}

impl FromStr for PredictorConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(PredictorConfig::Uniform);
        }
        if let Some(k) = s.strip_prefix("orderk:") {
            let k: usize = k.parse().map_err(|_| ConfigError::BadOrder(k.into()))?;
            if k > MAX_ORDER {
                return Err(ConfigError::BadOrder(k.to_string()));
            }
            return Ok(PredictorConfig::OrderK { k });
        }
        if let Some(rest) = s.strip_prefix("remote:") {
            let (endpoint, model) = match rest.rsplit_once(',') {
                Some((e, m)) => (Some(e.to_string()), m),
                None => (None, rest),
            };
            if model.is_empty() {
                return Err(ConfigError::MissingModel);
            }
            return Ok(PredictorConfig::Remote {
                endpoint,
                model_id: model.to_string(),
            });
        }
        Err(ConfigError::Unknown(s.into()))
    }
}

impl fmt::Display for PredictorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorConfig::Uniform => f.write_str("uniform"),
            PredictorConfig::OrderK { k } => write!(f, "orderk:{k}"),
            PredictorConfig::Remote {
                endpoint: Some(e),
                model_id,
            } => write!(f, "remote:{e},{model_id}"),
            PredictorConfig::Remote {
                endpoint: None,
                model_id,
            } => write!(f, "remote:{model_id}"),
        }
    }
}

impl PredictorConfig {
    /// Descriptor of a local predictor over bytes. Remote descriptors depend
    /// on the server and are only known after connecting.
    pub fn local_descriptor(&self) -> Option<PredictorDescriptor> {
        match self {
            PredictorConfig::Uniform => Some(UniformPredictor::new(Alphabet::bytes()).descriptor()),
            PredictorConfig::OrderK { k } => Some(PredictorDescriptor::new(
                "orderk",
                vec![("k".into(), k.to_string())],
            )),
            PredictorConfig::Remote { .. } => None,
        }
    }
}

pub type BoxedPredictor = Box<dyn Predictor + Send>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("no predictor matching {0} is available")]
    UnknownPredictor(PredictorDescriptor),
    #[error("no remote endpoint configured (set {ENDPOINT_ENV} or pass one explicitly)")]
    NoEndpoint,
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// The predictors a process can instantiate.
#[derive(Debug, Clone)]
pub struct Registry {
    local: Vec<PredictorConfig>,
    remote: Option<RemoteEndpoint>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::standard()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            local: Vec::new(),
            remote: None,
        }
    }

    /// Uniform and every order-k model, plus the endpoint from the
    /// environment if one is set.
    pub fn standard() -> Self {
        let mut local = vec![PredictorConfig::Uniform];
        local.extend((0..=MAX_ORDER).map(|k| PredictorConfig::OrderK { k }));
        Registry {
            local,
            remote: RemoteEndpoint::from_env(),
        }
    }

    pub fn offer(mut self, config: PredictorConfig) -> Self {
        match config {
            PredictorConfig::Remote {
                endpoint: Some(e), ..
            } => self.remote = Some(RemoteEndpoint::new(e)),
            PredictorConfig::Remote { endpoint: None, .. } => {}
            local => {
                if !self.local.contains(&local) {
                    self.local.push(local);
                }
            }
        }
        self
    }

    pub fn with_remote(mut self, endpoint: RemoteEndpoint) -> Self {
        self.remote = Some(endpoint);
        self
    }

    pub fn remote_endpoint(&self) -> Option<&RemoteEndpoint> {
        self.remote.as_ref()
    }

    fn offered(&self, config: &PredictorConfig) -> bool {
        self.local.contains(config)
    }

    /// A fresh local predictor, if offered.
    pub fn build_local(&self, config: &PredictorConfig) -> Result<BoxedPredictor, RegistryError> {
        let unknown = || {
            RegistryError::UnknownPredictor(
                config
                    .local_descriptor()
                    .unwrap_or_else(|| PredictorDescriptor::new(config.to_string(), Vec::new())),
            )
        };
        if !self.offered(config) {
            return Err(unknown());
        }
        match config {
            PredictorConfig::Uniform => Ok(Box::new(UniformPredictor::new(Alphabet::bytes()))),
            PredictorConfig::OrderK { k } => {
                Ok(Box::new(OrderKPredictor::bytes(*k).map_err(|_| unknown())?))
            }
            PredictorConfig::Remote { .. } => Err(unknown()),
        }
    }

    /// Endpoint to use for a remote config: the config's own, else the
    /// registry's.
    pub fn endpoint_for(&self, config: &PredictorConfig) -> Result<RemoteEndpoint, RegistryError> {
        match config {
            PredictorConfig::Remote {
                endpoint: Some(e), ..
            } => Ok(match &self.remote {
                Some(r) => RemoteEndpoint::new(e.clone()).with_timeout(r.timeout),
                None => RemoteEndpoint::new(e.clone()),
            }),
            _ => self.remote.clone().ok_or(RegistryError::NoEndpoint),
        }
    }

    /// Map a header descriptor back to a config this registry can build.
    pub fn resolve(&self, desc: &PredictorDescriptor) -> Result<PredictorConfig, RegistryError> {
        let unknown = || RegistryError::UnknownPredictor(desc.clone());
        let config = match desc.id.as_str() {
            "uniform" if desc.params.is_empty() => PredictorConfig::Uniform,
            "orderk" if desc.params.len() == 1 => {
                let k = desc
                    .param("k")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(unknown)?;
                PredictorConfig::OrderK { k }
            }
            "remote" => {
                let model_id = desc.param("model_id").ok_or_else(unknown)?;
                if self.remote.is_none() {
                    return Err(RegistryError::NoEndpoint);
                }
                return Ok(PredictorConfig::Remote {
                    endpoint: None,
                    model_id: model_id.to_string(),
                });
            }
            _ => return Err(unknown()),
        };
        if config.local_descriptor().as_ref() != Some(desc) || !self.offered(&config) {
            return Err(unknown());
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_predictor_strings() {
        assert_eq!("uniform".parse(), Ok(PredictorConfig::Uniform));
        assert_eq!("orderk:4".parse(), Ok(PredictorConfig::OrderK { k: 4 }));
        assert_eq!(
            "remote:127.0.0.1:7070,gpt2".parse(),
            Ok(PredictorConfig::Remote {
                endpoint: Some("127.0.0.1:7070".into()),
                model_id: "gpt2".into()
            })
        );
        assert_eq!(
            "remote:gpt2".parse(),
            Ok(PredictorConfig::Remote {
                endpoint: None,
                model_id: "gpt2".into()
            })
        );
        assert!(matches!(
            "orderk:9".parse::<PredictorConfig>(),
            Err(ConfigError::BadOrder(_))
        ));
        assert!(matches!(
            "orderk:x".parse::<PredictorConfig>(),
            Err(ConfigError::BadOrder(_))
        ));
        assert!(matches!(
            "lzma".parse::<PredictorConfig>(),
            Err(ConfigError::Unknown(_))
        ));
        for s in ["uniform", "orderk:3", "remote:h:1,m"] {
            assert_eq!(s.parse::<PredictorConfig>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn registry_resolves_only_what_it_offers() {
        let only_k2 = Registry::empty().offer(PredictorConfig::OrderK { k: 2 });
        let k3 = PredictorConfig::OrderK { k: 3 }.local_descriptor().unwrap();
        assert!(matches!(
            only_k2.resolve(&k3),
            Err(RegistryError::UnknownPredictor(_))
        ));
        let k2 = PredictorConfig::OrderK { k: 2 }.local_descriptor().unwrap();
        assert_eq!(only_k2.resolve(&k2), Ok(PredictorConfig::OrderK { k: 2 }));
        assert!(only_k2.build_local(&PredictorConfig::Uniform).is_err());
    }

    #[test]
    fn extra_params_are_rejected() {
        let r = Registry::standard();
        let d = PredictorDescriptor::new(
            "orderk",
            vec![("k".into(), "2".into()), ("x".into(), "1".into())],
        );
        assert!(r.resolve(&d).is_err());
        let d = PredictorDescriptor::new("orderk", vec![("k".into(), "02".into())]);
        assert!(r.resolve(&d).is_err());
    }
}
