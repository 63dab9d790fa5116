//! Experiment configuration: a TOML file with one section per concern.
//! Every validation error names the offending key.

use parhom_core::homogenize::{EstimateOptions, Method};
use parhom_core::obstacle::Side;
use parhom_core::{BaseKind, BoundaryData, EnvSpec, OperatorSpec, Region, SymMatrix};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    Corrector,
    Obstacle,
    Effective,
    Rate,
    Moments,
    Ergodic,
    Regularity,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Corrector => "corrector",
            ExperimentKind::Obstacle => "obstacle",
            ExperimentKind::Effective => "effective",
            ExperimentKind::Rate => "rate",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Regularity => "regularity",
        }
    }
}

fn default_n_env() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_env")]
    pub n_env: usize,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_lambda_min() -> f64 {
    1.0
}

fn default_lambda_max() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub kind: BaseKind,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default)]
    pub modulated: bool,
}

impl OperatorSection {
    pub fn to_spec(&self) -> Result<OperatorSpec, CliError> {
        let spec = match self.kind {
            BaseKind::LinearTrace => OperatorSpec::linear_trace(),
            kind => OperatorSpec::new(kind, self.lambda_min, self.lambda_max)
                .map_err(|e| CliError::Config(format!("operator.lambda: {e}")))?,
        };
        Ok(if self.modulated { spec.modulated() } else { spec })
    }

    pub fn describe(&self) -> String {
        let base = match self.kind {
            BaseKind::PucciPlus => "pucci_plus",
            BaseKind::PucciMinus => "pucci_minus",
            BaseKind::LinearTrace => "linear_trace",
        };
        if self.modulated {
            format!("modulated_{base}")
        } else {
            base.to_string()
        }
    }
}

fn default_resolution() -> u32 {
    16
}

fn default_cfl() -> f64 {
    0.8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// grid nodes per unit length
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { resolution: default_resolution(), cfl_factor: default_cfl() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPreset {
    Zero,
    Constant,
    /// product of half-period sines vanishing on the lateral boundary
    SinBump,
    Linear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCfg {
    pub preset: BoundaryPreset,
    #[serde(default = "default_boundary_value")]
    pub value: f64,
}

fn default_boundary_value() -> f64 {
    1.0
}

impl Default for BoundaryCfg {
    fn default() -> Self {
        BoundaryCfg { preset: BoundaryPreset::SinBump, value: 1.0 }
    }
}

impl BoundaryCfg {
    pub fn to_data(&self, region: &Region) -> BoundaryData {
        match self.preset {
            BoundaryPreset::Zero => BoundaryData::Zero,
            BoundaryPreset::Constant => BoundaryData::Const(self.value),
            BoundaryPreset::Linear => {
                let v = self.value;
                BoundaryData::func(move |x: &[f64], _| v * x[0])
            }
            BoundaryPreset::SinBump => {
                let v = self.value;
                let lo = region.x_lo.clone();
                let hi = region.x_hi.clone();
                BoundaryData::func(move |x: &[f64], _| {
                    let mut acc = v;
                    for i in 0..x.len() {
                        acc *= (std::f64::consts::PI * (x[i] - lo[i]) / (hi[i] - lo[i])).sin();
                    }
                    acc
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    ContactDichotomy,
    CorrectorZero,
    Both,
}

impl MethodChoice {
    pub fn methods(&self) -> Vec<Method> {
        match self {
            MethodChoice::ContactDichotomy => vec![Method::ContactDichotomy],
            MethodChoice::CorrectorZero => vec![Method::CorrectorZero],
            MethodChoice::Both => vec![Method::ContactDichotomy, Method::CorrectorZero],
        }
    }
}

/// Shared knobs for the effective-operator bisection.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateCfg {
    #[serde(default = "default_estimate_tol")]
    pub tol: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub scale_k: u32,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default)]
    pub n_env: Option<usize>,
    #[serde(default = "default_fraction_threshold")]
    pub fraction_threshold: f64,
}

fn default_estimate_tol() -> f64 {
    0.01
}

fn default_budget() -> usize {
    20_000
}

fn default_fraction_threshold() -> f64 {
    0.5
}

impl Default for EstimateCfg {
    fn default() -> Self {
        EstimateCfg {
            tol: default_estimate_tol(),
            budget: default_budget(),
            scale_k: 0,
            resolution: default_resolution(),
            n_env: None,
            fraction_threshold: default_fraction_threshold(),
        }
    }
}

impl EstimateCfg {
    pub fn to_options(&self, method: Method, cfl: f64, default_n_env: usize) -> EstimateOptions {
        let mut opts = EstimateOptions::new(method);
        opts.tol = self.tol;
        opts.budget = self.budget;
        opts.scale_k = self.scale_k;
        opts.resolution = self.resolution;
        opts.n_env = self.n_env.unwrap_or(default_n_env);
        opts.fraction_threshold = self.fraction_threshold;
        opts.cfl_factor = cfl;
        opts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainCfg {
    Cube,
    Cylinder,
    Forward,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default = "default_domain")]
    pub domain: DomainCfg,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub rhs: f64,
    #[serde(default)]
    pub boundary: BoundaryCfg,
    #[serde(default)]
    pub eps: f64,
    /// when set, runs the randomized comparison-principle check instead of
    /// a single solve
    #[serde(default)]
    pub comparison_pairs: Option<usize>,
    #[serde(default)]
    pub holder_alpha: Option<f64>,
}

fn default_domain() -> DomainCfg {
    DomainCfg::Cube
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorSection {
    #[serde(default = "default_m")]
    pub m: Vec<f64>,
    /// fixed level; when absent the critical level is estimated first
    #[serde(default)]
    pub ell: Option<f64>,
    /// offset added to the (estimated or given) critical level
    #[serde(default)]
    pub ell_offset: f64,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub threshold_c: Option<f64>,
    #[serde(default)]
    pub threshold_c_exp: Option<f64>,
    #[serde(default)]
    pub estimate: EstimateCfg,
    #[serde(default = "default_true")]
    pub assert_nonincreasing: bool,
    /// assert the barrier floor `median >= 0.5 β |ell_offset|`
    #[serde(default)]
    pub assert_floor: bool,
}

fn default_m() -> Vec<f64> {
    vec![1.0]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    #[serde(default = "default_m")]
    pub m: Vec<f64>,
    pub ell: f64,
    #[serde(default)]
    pub scale_k: u32,
    #[serde(default)]
    pub eps: f64,
    /// levels for the ℓ-monotonicity ladder of contact fractions
    #[serde(default)]
    pub ladder: Vec<f64>,
    /// fraction of the time extent at which the nesting check truncates
    #[serde(default = "default_split")]
    pub nesting_split: f64,
}

fn default_split() -> f64 {
    0.5
}

// no deny_unknown_fields here: serde cannot combine it with flatten
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveSection {
    /// scalar Hessian entries for d = 1
    #[serde(default)]
    pub ms: Vec<f64>,
    /// upper-triangle matrices (overrides `ms`; entries of length 1 or 3)
    #[serde(default)]
    pub matrices: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_method_choice")]
    pub method: MethodChoice,
    #[serde(flatten)]
    pub estimate: EstimateCfg,
    /// write the d = 1 table (built from the last method run) to this file
    #[serde(default)]
    pub table_out: Option<String>,
    #[serde(default)]
    pub normalize_table: bool,
    /// constant-coefficient fixed point: assert |fbar - F(M)| <= tol·(1+|F(M)|)
    #[serde(default)]
    pub assert_fixed_point: Option<f64>,
    /// assert against an externally known effective value
    #[serde(default)]
    pub expect_fbar: Option<f64>,
    #[serde(default)]
    pub expect_rtol: Option<f64>,
    /// assert both methods agree within summed bracket widths plus slack
    #[serde(default)]
    pub assert_method_agreement: bool,
    #[serde(default)]
    pub check_ellipticity: bool,
}

fn default_method_choice() -> MethodChoice {
    MethodChoice::Both
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateSection {
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub boundary: BoundaryCfg,
    /// scalar table arguments used to build the effective table
    #[serde(default = "default_table_ms")]
    pub table_ms: Vec<f64>,
    #[serde(default = "default_table_method")]
    pub table_method: MethodChoice,
    #[serde(flatten)]
    pub estimate: EstimateCfg,
    #[serde(default = "default_eff_res")]
    pub effective_resolution: u32,
    #[serde(default)]
    pub assert_decreasing: bool,
}

fn default_table_ms() -> Vec<f64> {
    vec![-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0]
}

fn default_table_method() -> MethodChoice {
    MethodChoice::CorrectorZero
}

fn default_eff_res() -> u32 {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    #[serde(default = "default_m")]
    pub m: Vec<f64>,
    /// fixed level; when absent the critical level is estimated first
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default)]
    pub ell_offset: f64,
    pub k_list: Vec<u32>,
    #[serde(default)]
    pub variance_parent_k: Option<u32>,
    #[serde(default = "default_side")]
    pub variance_side: Side,
    #[serde(default)]
    pub estimate: EstimateCfg,
    #[serde(default = "default_true")]
    pub assert_monotone: bool,
    #[serde(default = "default_true")]
    pub assert_product_decay: bool,
    /// fixture: scramble the scale order before the monotonicity check
    #[serde(default)]
    pub negative_control: bool,
}

fn default_side() -> Side {
    Side::Above
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Volume,
    CellSum,
    ContactMeasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Standard,
    Parabolic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicSection {
    pub process: ProcessKind,
    #[serde(default = "default_sequence")]
    pub sequence: SequenceKind,
    pub sides: Vec<u64>,
    /// level for the contact-measure process
    #[serde(default = "default_ergodic_ell")]
    pub ell: f64,
    /// maximal-inequality level; absent skips the check
    #[serde(default)]
    pub alpha: Option<f64>,
    /// randomized covering-selection instances per dimension (0 skips)
    #[serde(default)]
    pub vitali_instances: usize,
    #[serde(default)]
    pub drift_tol: Option<f64>,
    #[serde(default)]
    pub subadditivity_checks: usize,
}

fn default_sequence() -> SequenceKind {
    SequenceKind::Parabolic
}

fn default_ergodic_ell() -> f64 {
    -1.4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySection {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_m")]
    pub m: Vec<f64>,
    /// separation-check levels
    #[serde(default)]
    pub ells: Vec<f64>,
    #[serde(default = "default_theta_mass")]
    pub theta_mass: f64,
}

fn default_theta() -> f64 {
    0.05
}

fn default_theta_mass() -> f64 {
    1e-3
}

/// Full experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub operator: Option<OperatorSection>,
    /// multiple operators; each runs in turn (array of tables)
    #[serde(default)]
    pub operators: Option<Vec<OperatorSection>>,
    pub environment: EnvSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solve: Option<SolveSection>,
    #[serde(default)]
    pub corrector: Option<CorrectorSection>,
    #[serde(default)]
    pub obstacle: Option<ObstacleSection>,
    #[serde(default)]
    pub effective: Option<EffectiveSection>,
    #[serde(default)]
    pub rate: Option<RateSection>,
    #[serde(default)]
    pub moments: Option<MomentsSection>,
    #[serde(default)]
    pub ergodic: Option<ErgodicSection>,
    #[serde(default)]
    pub regularity: Option<RegularitySection>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.environment
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.experiment.n_env == 0 {
            return Err(CliError::Config("experiment.n_env: must be positive".into()));
        }
        if !(self.grid.cfl_factor > 0.0 && self.grid.cfl_factor <= 1.0) {
            return Err(CliError::Config("grid.cfl_factor: must lie in (0, 1]".into()));
        }
        if self.grid.resolution == 0 {
            return Err(CliError::Config("grid.resolution: must be positive".into()));
        }
        if self.operator.is_none() && self.operators.as_ref().is_none_or(|v| v.is_empty()) {
            return Err(CliError::Config("operator: missing [operator] or [[operators]]".into()));
        }
        let section_needed: (&str, bool) = match self.experiment.kind {
            ExperimentKind::Solve => ("solve", self.solve.is_some()),
            ExperimentKind::Corrector => ("corrector", self.corrector.is_some()),
            ExperimentKind::Obstacle => ("obstacle", self.obstacle.is_some()),
            ExperimentKind::Effective => ("effective", self.effective.is_some()),
            ExperimentKind::Rate => ("rate", self.rate.is_some()),
            ExperimentKind::Moments => ("moments", self.moments.is_some()),
            ExperimentKind::Ergodic => ("ergodic", self.ergodic.is_some()),
            ExperimentKind::Regularity => ("regularity", self.regularity.is_some()),
        };
        if !section_needed.1 {
            return Err(CliError::Config(format!(
                "{0}: experiment kind `{0}` needs a [{0}] section",
                section_needed.0
            )));
        }
        Ok(())
    }

    pub fn operator_sections(&self) -> Vec<OperatorSection> {
        match (&self.operators, &self.operator) {
            (Some(list), _) if !list.is_empty() => list.clone(),
            (_, Some(one)) => vec![one.clone()],
            _ => Vec::new(),
        }
    }
}

/// Parses an upper-triangle matrix entry list of length 1 (d = 1) or 3 (d = 2).
pub fn parse_matrix(entries: &[f64], key: &str) -> Result<SymMatrix, CliError> {
    SymMatrix::from_upper(entries).map_err(|_| {
        CliError::Config(format!("{key}: expected 1 entry (d=1) or 3 entries [m00, m01, m11] (d=2)"))
    })
}
