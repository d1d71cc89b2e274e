use serde::{Deserialize, Serialize};

/// Which member of the method family to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Inexact local subproblem solves.
    Adapd,
    /// One forward gradient step per iteration instead of a local solve.
    AdapdOg,
    /// `X ← WX − α_k ∇F(X)` with `α_k = α₀/(k+1)^q`.
    Dgd { alpha0: f64, q: f64 },
    /// Linearized proximal primal-dual baseline.
    ProxGpda { beta: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Adapd => "adapd",
            Method::AdapdOg => "adapd_og",
            Method::Dgd { .. } => "dgd",
            Method::ProxGpda { .. } => "prox_gpda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    /// FISTA with restart on function increase.
    Fista,
    /// Plain gradient descent with step `η/(1 + ηL̂)`.
    GradientDescent,
    /// Closed-form subproblem solution supplied by the problem.
    Exact,
    /// Fixed number of mini-batch gradient steps; the residual test is skipped.
    Stochastic,
}

/// Local subproblem settings. The tolerance at iteration `k` is
/// `ε_k = eps_hat/(k+1)^decay`, applied per agent as `ε_{k+1}/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    pub method: InnerMethod,
    pub eps_hat: f64,
    pub decay: f64,
    pub max_iters: usize,
    /// Accept the best iterate when the tolerance is not met instead of failing.
    pub best_effort: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { method: InnerMethod::Fista, eps_hat: 1e-2, decay: 1.5, max_iters: 500, best_effort: false }
    }
}

impl InnerConfig {
    pub fn tolerance(&self, k: usize) -> f64 {
        self.eps_hat / ((k + 1) as f64).powf(self.decay)
    }
}

/// How the `W`-applications of the X0 and Z̃ updates are carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CommMode {
    /// One neighbor exchange per application.
    #[default]
    Single,
    /// Degree-`R` Chebyshev polynomial of `W`; `None` picks `⌈2/√(1−ρ)⌉`.
    Chebyshev { degree: Option<usize> },
    /// `W^R`; `None` picks `⌈2/√(1−ρ)⌉`.
    Power { degree: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "limit", rename_all = "snake_case")]
pub enum Budget {
    /// Cumulative neighbor-communication rounds.
    Communications(u64),
    Iterations(u64),
    /// Cumulative gradient evaluations per agent.
    Gradients(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    /// Penalty parameter / step size of the ADAPD family.
    pub eta: f64,
    pub inner: InnerConfig,
    pub comm: CommMode,
    /// Multiplies the `1/η` dual step of the Y and Z̃ updates.
    pub dual_scale: f64,
    pub budget: Budget,
    /// Mini-batch size for stochastic gradients; `None` means full gradients.
    pub minibatch: Option<usize>,
    /// Smoothness estimate for problems that carry no hint.
    pub lipschitz: Option<f64>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Adapd,
            eta: 0.1,
            inner: InnerConfig::default(),
            comm: CommMode::Single,
            dual_scale: 1.0,
            budget: Budget::Communications(500),
            minibatch: None,
            lipschitz: None,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(format!("eta = {} must be positive", self.eta));
        }
        if !(self.dual_scale > 0.0) {
            return Err(format!("dual_scale = {} must be positive", self.dual_scale));
        }
        if !(self.inner.eps_hat > 0.0) {
            return Err(format!("inner eps_hat = {} must be positive", self.inner.eps_hat));
        }
        if self.inner.max_iters == 0 {
            return Err("inner max_iters must be >= 1".into());
        }
        match self.comm {
            CommMode::Chebyshev { degree: Some(0) } | CommMode::Power { degree: Some(0) } => {
                return Err("communication degree R must be >= 1".into())
            }
            _ => {}
        }
        match self.method {
            Method::Dgd { alpha0, q } if !(alpha0 > 0.0) || !(q > 0.0 && q <= 1.0) => {
                Err(format!("DGD needs alpha0 > 0 and q in (0,1], got {alpha0}, {q}"))
            }
            Method::ProxGpda { beta } if !(beta > 0.0) => Err(format!("Prox-GPDA needs beta > 0, got {beta}")),
            _ => Ok(()),
        }
    }

    /// Sets the method's tuned step parameter (`η`, `α₀` or `β`).
    pub fn with_step(mut self, value: f64) -> Self {
        match &mut self.method {
            Method::Adapd | Method::AdapdOg => self.eta = value,
            Method::Dgd { alpha0, .. } => *alpha0 = value,
            Method::ProxGpda { beta } => *beta = value,
        }
        self
    }

    /// The value [`with_step`](Self::with_step) sets.
    pub fn step_size_raw(&self) -> f64 {
        match self.method {
            Method::Adapd | Method::AdapdOg => self.eta,
            Method::Dgd { alpha0, .. } => alpha0,
            Method::ProxGpda { beta } => beta,
        }
    }

    /// The tuned step parameter, oriented so that smaller means more
    /// conservative (`1/β` for Prox-GPDA).
    pub fn step_size(&self) -> f64 {
        match self.method {
            Method::Adapd | Method::AdapdOg => self.eta,
            Method::Dgd { alpha0, .. } => alpha0,
            Method::ProxGpda { beta } => 1.0 / beta,
        }
    }
}

/// `⌈2/√(1−ρ)⌉`.
pub fn default_mc_degree(rho: f64) -> usize {
    (2.0 / (1.0 - rho).sqrt()).ceil() as usize
}

/// `C = 28/(1−ρ)²`.
pub fn lyapunov_c(rho: f64) -> f64 {
    28.0 / (1.0 - rho).powi(2)
}

/// `Ĉ = 16/(1−ρ)²`.
pub fn lyapunov_c_hat(rho: f64) -> f64 {
    16.0 / (1.0 - rho).powi(2)
}
