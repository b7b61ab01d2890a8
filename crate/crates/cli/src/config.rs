//! Experiment configuration: a TOML file with nested sections. Unknown keys
//! are rejected so typos fail loudly instead of silently running defaults.

use npde_core::grid::{Dim, WeightFn};
use npde_core::optimize::{ConstraintBox, OptimizeFlags, TrainConfig};
use npde_core::parabolic::Sigma;
use npde_core::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainParabolic,
    Gradcheck,
    StencilConvergence,
    WaveFree,
    WaveSteer,
    WaveVelocity,
    SaturatePlan,
    AbsorbNonlinear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub half_extent: Real,
    pub n_half: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { dim: 1, half_extent: 3.0, n_half: 30 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: Real,
    pub nt: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_final: 1.0, nt: 40 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SigmaSection {
    pub kind: String,
    #[serde(default = "default_relu_eps")]
    pub eps: Real,
}

fn default_relu_eps() -> Real {
    0.1
}

impl Default for SigmaSection {
    fn default() -> Self {
        SigmaSection { kind: "zero".into(), eps: default_relu_eps() }
    }
}

impl SigmaSection {
    pub fn build(&self) -> anyhow::Result<Sigma<Real>> {
        Ok(match self.kind.as_str() {
            "zero" => Sigma::Zero,
            "identity" => Sigma::Identity,
            "tanh" => Sigma::Tanh,
            "smooth-relu" => Sigma::SmoothRelu { eps: self.eps },
            other => anyhow::bail!("unknown sigma kind {other:?}"),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub kind: String,
    #[serde(default = "default_lambda")]
    pub lambda: Real,
}

fn default_lambda() -> Real {
    2.0
}

impl Default for WeightSection {
    fn default() -> Self {
        WeightSection { kind: "polynomial".into(), lambda: default_lambda() }
    }
}

impl WeightSection {
    pub fn build(&self) -> anyhow::Result<WeightFn<Real>> {
        Ok(match self.kind.as_str() {
            "polynomial" => WeightFn::polynomial(self.lambda)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
            "gaussian" => WeightFn::Gaussian,
            other => anyhow::bail!("unknown weight kind {other:?}"),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub alpha_max: Real,
    pub beta_min: Real,
    pub beta_max: Real,
    pub gamma_max: Real,
    pub theta_max: Real,
}

impl Default for BoxSection {
    fn default() -> Self {
        BoxSection { alpha_max: 1.0, beta_min: 0.05, beta_max: 2.0, gamma_max: 1.0, theta_max: 1.0 }
    }
}

impl BoxSection {
    pub fn build(&self) -> anyhow::Result<ConstraintBox<Real>> {
        ConstraintBox::new(
            self.alpha_max,
            self.beta_min,
            self.beta_max,
            self.gamma_max,
            self.theta_max,
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_step_init")]
    pub step_init: Real,
    #[serde(default = "default_backtrack")]
    pub backtrack_factor: Real,
    #[serde(default = "default_loss_tol")]
    pub loss_tol: Real,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: Real,
    #[serde(default = "default_true")]
    pub optimize_alpha: bool,
    #[serde(default = "default_true")]
    pub optimize_beta: bool,
    #[serde(default = "default_true")]
    pub optimize_gamma: bool,
    #[serde(default = "default_true")]
    pub optimize_theta: bool,
    #[serde(default)]
    pub spatially_constant: bool,
    /// Translation demo geometry: the bump center moves from -shift/2 to
    /// +shift/2 over the horizon.
    #[serde(default = "default_shift")]
    pub shift: Real,
    #[serde(default = "default_width")]
    pub bump_width: Real,
    /// Extra training pairs beyond the primary one (mirror-image tasks).
    #[serde(default)]
    pub extra_samples: usize,
}

fn default_max_iters() -> usize {
    200
}
fn default_step_init() -> Real {
    0.5
}
fn default_backtrack() -> Real {
    0.5
}
fn default_loss_tol() -> Real {
    1e-12
}
fn default_grad_tol() -> Real {
    1e-9
}
fn default_true() -> bool {
    true
}
fn default_shift() -> Real {
    0.3
}
fn default_width() -> Real {
    0.5
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            max_iters: default_max_iters(),
            step_init: default_step_init(),
            backtrack_factor: default_backtrack(),
            loss_tol: default_loss_tol(),
            grad_tol: default_grad_tol(),
            optimize_alpha: true,
            optimize_beta: true,
            optimize_gamma: true,
            optimize_theta: true,
            spatially_constant: false,
            shift: default_shift(),
            bump_width: default_width(),
            extra_samples: 0,
        }
    }
}

impl TrainSection {
    pub fn build(&self) -> TrainConfig<Real> {
        TrainConfig {
            max_iters: self.max_iters,
            step_init: self.step_init,
            backtrack_factor: self.backtrack_factor,
            loss_tol: self.loss_tol,
            grad_tol: self.grad_tol,
            armijo_c: 1e-4,
            flags: OptimizeFlags {
                alpha: self.optimize_alpha,
                beta: self.optimize_beta,
                gamma: self.optimize_gamma,
                theta: self.optimize_theta,
            },
            spatially_constant: self.spatially_constant,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: Real,
}

fn default_probes() -> usize {
    20
}
fn default_fd_step() -> Real {
    2e-6
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection { n_probes: default_probes(), fd_step: default_fd_step() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSection {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_freq_range")]
    pub freq_range: i64,
    #[serde(default = "default_epsilon")]
    pub epsilon: Real,
    #[serde(default = "default_total_time")]
    pub total_time: Real,
}

fn default_n_max() -> usize {
    16
}
fn default_freq_range() -> i64 {
    4
}
fn default_epsilon() -> Real {
    0.2
}
fn default_total_time() -> Real {
    5.0
}

impl Default for WaveSection {
    fn default() -> Self {
        WaveSection {
            n_max: default_n_max(),
            freq_range: default_freq_range(),
            epsilon: default_epsilon(),
            total_time: default_total_time(),
        }
    }
}

/// Top-level experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub sigma: SigmaSection,
    #[serde(default)]
    pub weight: WeightSection,
    #[serde(default, rename = "box")]
    pub constraint_box: BoxSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    #[serde(default)]
    pub wave: WaveSection,
}

fn default_seed() -> u64 {
    0
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let _ = Dim::from_usize(self.grid.dim).map_err(|e| anyhow::anyhow!(e.to_string()))?;
        if !(self.grid.half_extent > 0.0) || self.grid.n_half == 0 {
            anyhow::bail!("grid.half_extent must be positive and grid.n_half at least 1");
        }
        if !(self.time.t_final > 0.0) || self.time.nt == 0 {
            anyhow::bail!("time.t_final must be positive and time.nt at least 1");
        }
        if self.wave.n_max == 0 || self.wave.n_max > 64 {
            anyhow::bail!("wave.n_max must lie in 1..=64");
        }
        if self.wave.freq_range < 1 || self.wave.freq_range > 16 {
            anyhow::bail!("wave.freq_range must lie in 1..=16");
        }
        if !(self.wave.epsilon > 0.0) || !(self.wave.total_time > 0.0) {
            anyhow::bail!("wave.epsilon and wave.total_time must be positive");
        }
        self.sigma.build()?;
        self.weight.build()?;
        self.constraint_box.build()?;
        Ok(())
    }

    /// Canonical serialization written next to the results; running the
    /// echo reproduces the run byte for byte.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
