//! The ten method labels of the sweep (model × stepsize policy, plus mirror descent).

use std::fmt;

use modelopt::{ModelKind, PolicyKind};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SGD")]
    Sgd,
    #[serde(rename = "SGD-G")]
    SgdG,
    #[serde(rename = "SGD-R")]
    SgdR,
    #[serde(rename = "SPL")]
    Spl,
    #[serde(rename = "SPL-G")]
    SplG,
    #[serde(rename = "SPL-R")]
    SplR,
    #[serde(rename = "TRUNC")]
    Trunc,
    #[serde(rename = "TRUNC-G")]
    TruncG,
    #[serde(rename = "TRUNC-R")]
    TruncR,
    #[serde(rename = "MD")]
    Md,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Sgd,
        Method::SgdG,
        Method::SgdR,
        Method::Spl,
        Method::SplG,
        Method::SplR,
        Method::Trunc,
        Method::TruncG,
        Method::TruncR,
        Method::Md,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "SGD",
            Method::SgdG => "SGD-G",
            Method::SgdR => "SGD-R",
            Method::Spl => "SPL",
            Method::SplG => "SPL-G",
            Method::SplR => "SPL-R",
            Method::Trunc => "TRUNC",
            Method::TruncG => "TRUNC-G",
            Method::TruncR => "TRUNC-R",
            Method::Md => "MD",
        }
    }

    pub fn parse(s: &str) -> Result<Self, BenchError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| BenchError::Config(format!("unknown method {s:?}")))
    }

    /// Model and policy, or `None` for mirror descent.
    pub fn solver_parts(self) -> Option<(ModelKind, PolicyKind)> {
        use PolicyKind::*;
        let (model, policy) = match self {
            Method::Sgd => (ModelKind::SUBGRADIENT, Constant),
            Method::SgdG => (ModelKind::SUBGRADIENT, Growth),
            Method::SgdR => (ModelKind::SUBGRADIENT, Reference),
            Method::Spl => (ModelKind::PROX_LINEAR, Constant),
            Method::SplG => (ModelKind::PROX_LINEAR, Growth),
            Method::SplR => (ModelKind::PROX_LINEAR, Reference),
            Method::Trunc => (ModelKind::TRUNCATED, Constant),
            Method::TruncG => (ModelKind::TRUNCATED, Growth),
            Method::TruncR => (ModelKind::TRUNCATED, Reference),
            Method::Md => return None,
        };
        Some((model, policy))
    }

    pub fn is_prox_linear(self) -> bool {
        matches!(self, Method::Spl | Method::SplG | Method::SplR)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
