use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ais,
    Stratified,
    Ols,
    Ridge,
    Lasso,
    UniformSubsample,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ais => "ais",
            Method::Stratified => "stratified",
            Method::Ols => "ols",
            Method::Ridge => "ridge",
            Method::Lasso => "lasso",
            Method::UniformSubsample => "uniform-subsample",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ais" => Method::Ais,
            "stratified" => Method::Stratified,
            "ols" => Method::Ols,
            "ridge" => Method::Ridge,
            "lasso" => Method::Lasso,
            "uniform-subsample" => Method::UniformSubsample,
            other => return Err(format!("unknown method `{other}`")),
        })
    }
}

/// Fitted parameter with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta: Vec<f64>,
    pub method: Method,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    /// `1 / sum(w_i^2)` of the final sampling weights, when the method has any.
    pub ess: Option<f64>,
    pub warnings: Vec<String>,
}

impl EstimateResult {
    pub fn new(method: Method, theta: Vec<f64>) -> Self {
        Self {
            theta,
            method,
            iterations: 0,
            objective_trace: Vec::new(),
            ess: None,
            warnings: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}
