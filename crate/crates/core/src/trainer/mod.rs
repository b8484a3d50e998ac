//! Two-stage training: Adam with adaptive loss weights, then L-BFGS.

pub mod adam;
pub mod lbfgs;
mod loss;
pub mod relobralo;

use std::cell::RefCell;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use lbfgs::{lbfgs_step, LbfgsConfig, LbfgsState, LineSearchReport};
pub use loss::soft_losses;
pub use relobralo::{relobralo_update, RelobraloConfig};

use crate::error::{MeaError, Result};
use crate::geometry::{
    sample_boundary_curvature, sample_boundary_uniform, sample_interior, BoundaryProfile, DomainSpec, Point,
};
use crate::hard_bc::{fit_lift, BoundaryAudit, HardField, LiftSpec};
use crate::mea::AdmissibilityReport;
use crate::network::{init_mlp, read_blob, write_blob, InputNormalization, JetOrder, MlpParams};
use crate::residual::{pairwise_sum, residual_rmse, CoefficientField, Jet, SurfaceField};
use loss::{evaluate, BoundarySet, Evaluation, InteriorSet};

const DIVERGENCE_LIMIT: f64 = 1e12;
const SAMPLING_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;
const WEIGHTING_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Soft,
    Hard,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Soft => "soft",
            Formulation::Hard => "hard",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub formulation: Formulation,
    /// Hidden layers; defaults to 5 (soft) or 4 (hard).
    pub hidden_layers: Option<usize>,
    /// Hidden width; defaults to 128 (soft) or 256 (hard).
    pub width: Option<usize>,
    pub learning_rate: f64,
    pub adam_epochs: usize,
    pub lbfgs_epochs: usize,
    pub lbfgs: LbfgsConfig,
    pub n_pde: usize,
    pub n_bc: usize,
    /// Curvature-weighted boundary enrichment, circular domains only.
    pub n_bc_curv: usize,
    /// Resampling period in epochs; 0 keeps the first clouds for the whole run.
    pub resample_every: usize,
    pub relobralo: RelobraloConfig,
    pub seed: u64,
    pub n_val: usize,
    /// Validation and reference metrics are computed every this many epochs and at
    /// the last epoch of each stage.
    pub validate_every: usize,
    /// Checkpoint period in epochs when a checkpoint directory is given; 0 disables.
    pub checkpoint_every: usize,
    pub audit_points: usize,
    /// Write elapsed seconds to the log; when off the column is 0 and logs are reproducible byte for byte.
    pub record_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::Hard,
            hidden_layers: None,
            width: None,
            learning_rate: 1e-3,
            adam_epochs: 30_000,
            lbfgs_epochs: 10_000,
            lbfgs: LbfgsConfig::default(),
            n_pde: 16_384,
            n_bc: 1_024,
            n_bc_curv: 1_024,
            resample_every: 10,
            relobralo: RelobraloConfig::default(),
            seed: 0,
            n_val: 16_384,
            validate_every: 1,
            checkpoint_every: 0,
            audit_points: 10_000,
            record_wallclock: true,
        }
    }
}

impl TrainConfig {
    pub fn full_budget(formulation: Formulation) -> Self {
        Self { formulation, ..Self::default() }
    }

    pub fn architecture(&self) -> (usize, usize) {
        let (l, w) = match self.formulation {
            Formulation::Soft => (5, 128),
            Formulation::Hard => (4, 256),
        };
        (self.hidden_layers.unwrap_or(l), self.width.unwrap_or(w))
    }

    pub fn validate(&self) -> Result<()> {
        let (l, w) = self.architecture();
        let positive = [("hidden_layers", l), ("width", w), ("n_pde", self.n_pde), ("n_val", self.n_val), ("validate_every", self.validate_every)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(MeaError::Config(format!("{name} must be positive")));
        }
        if self.formulation == Formulation::Soft && self.n_bc == 0 {
            return Err(MeaError::Config("soft boundary conditions need n_bc > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MeaError::Config("learning_rate must be positive".into()));
        }
        self.lbfgs.validate()?;
        self.relobralo.validate()
    }
}

/// Domain, boundary data and PDE coefficients of one solve.
pub struct Problem<'a> {
    pub domain: DomainSpec,
    pub profile: BoundaryProfile,
    pub coefficients: &'a dyn CoefficientField,
    /// Result of the admissibility check run before training, if any.
    pub admissibility: Option<AdmissibilityReport>,
}

/// Reference heights at fixed points, for error tracking during training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReferenceSamples {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Adam = 1,
    Lbfgs = 2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub l_pde: f64,
    pub l_bc: Option<f64>,
    pub w_pde: f64,
    pub w_bc: Option<f64>,
    pub total: f64,
    pub pde_rmse_train: f64,
    pub pde_rmse_val: Option<f64>,
    pub ref_rmse: Option<f64>,
    pub wallclock_s: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Convergence log as CSV, one row per epoch.
pub fn write_log_csv<W: Write>(records: &[LossRecord], mut w: W) -> Result<()> {
    writeln!(w, "epoch,stage,L_pde,L_bc,w_pde,w_bc,total,pde_rmse_train,pde_rmse_val,ref_rmse,wallclock_s")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.stage as u8,
            r.l_pde,
            opt(r.l_bc),
            r.w_pde,
            opt(r.w_bc),
            r.total,
            r.pde_rmse_train,
            opt(r.pde_rmse_val),
            opt(r.ref_rmse),
            r.wallclock_s
        )?;
    }
    Ok(())
}

/// A trained network together with what is needed to evaluate the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedField {
    pub formulation: Formulation,
    pub domain: DomainSpec,
    pub lift: Option<LiftSpec>,
    pub net: MlpParams,
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    format: String,
    formulation: Formulation,
    domain: DomainSpec,
    lift: Option<LiftSpec>,
    sizes: Vec<usize>,
    seed: u64,
    normalization: InputNormalization,
}

impl TrainedField {
    pub fn new(formulation: Formulation, domain: DomainSpec, lift: Option<LiftSpec>, net: MlpParams) -> Self {
        Self { formulation, domain, lift, net }
    }

    fn header(&self) -> FieldHeader {
        FieldHeader {
            format: "mea-field-v1".into(),
            formulation: self.formulation,
            domain: self.domain,
            lift: self.lift.clone(),
            sizes: self.net.sizes().to_vec(),
            seed: self.net.seed,
            normalization: self.net.normalization,
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        write_blob(&mut w, &self.header(), &[self.net.theta()])
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        let (h, mut sections): (FieldHeader, Vec<Vec<f64>>) = read_blob(r)?;
        if h.format != "mea-field-v1" || sections.len() != 1 {
            return Err(MeaError::Checkpoint(format!("unexpected field file format {}", h.format)));
        }
        if (h.formulation == Formulation::Hard) != h.lift.is_some() {
            return Err(MeaError::Checkpoint("hard fields need a lift and soft fields must not carry one".into()));
        }
        let net = MlpParams::from_parts(h.sizes, sections.pop().unwrap(), h.normalization, h.seed)?;
        Ok(Self { formulation: h.formulation, domain: h.domain, lift: h.lift, net })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, |w| self.write(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(fs::File::open(path)?))
    }
}

impl SurfaceField for TrainedField {
    fn jet(&self, p: Point) -> Result<Jet> {
        match &self.lift {
            Some(lift) => HardField::new(&self.net, &self.domain, lift).jet(p),
            None => self.net.forward_jet(p),
        }
    }

    fn jets(&self, points: &[Point]) -> Result<Vec<Jet>> {
        match &self.lift {
            Some(lift) => HardField::new(&self.net, &self.domain, lift).jets(points),
            None => self.net.jets(points),
        }
    }

    fn values(&self, points: &[Point]) -> Result<Vec<f64>> {
        match &self.lift {
            Some(lift) => HardField::new(&self.net, &self.domain, lift).values(points),
            None => Ok(self.net.forward_batch(points, JetOrder::Value)?.into_output()),
        }
    }
}

fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<()>,
{
    let tmp = path.with_extension("tmp");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    format: String,
    epoch: usize,
    stage: Stage,
    adam_step: u64,
    lbfgs_pairs: usize,
    field: FieldHeader,
}

/// Writes network parameters, optimizer state and epoch index.
fn write_train_checkpoint(path: &Path, field: &TrainedField, epoch: usize, stage: Stage, adam: &AdamState, lbfgs: &LbfgsState) -> Result<()> {
    let header = StateHeader {
        format: "mea-train-v1".into(),
        epoch,
        stage,
        adam_step: adam.step,
        lbfgs_pairs: lbfgs.len(),
        field: field.header(),
    };
    let mut sections: Vec<&[f64]> = vec![field.net.theta(), &adam.m, &adam.v];
    for (s, y) in &lbfgs.pairs {
        sections.push(s);
        sections.push(y);
    }
    atomic_write(path, |w| write_blob(w, &header, &sections))
}

/// Optimizer state restored from a training checkpoint.
pub struct TrainCheckpoint {
    pub field: TrainedField,
    pub epoch: usize,
    pub stage: Stage,
    pub adam: AdamState,
    pub lbfgs: LbfgsState,
}

pub fn read_train_checkpoint(path: &Path) -> Result<TrainCheckpoint> {
    let (h, sections): (StateHeader, Vec<Vec<f64>>) = read_blob(fs::File::open(path)?)?;
    if h.format != "mea-train-v1" || sections.len() != 3 + 2 * h.lbfgs_pairs {
        return Err(MeaError::Checkpoint("malformed training checkpoint".into()));
    }
    let mut it = sections.into_iter();
    let theta = it.next().unwrap();
    let mut adam = AdamState::new(theta.len());
    adam.m = it.next().unwrap();
    adam.v = it.next().unwrap();
    adam.step = h.adam_step;
    let mut lbfgs = LbfgsState::default();
    while let (Some(s), Some(y)) = (it.next(), it.next()) {
        lbfgs.pairs.push_back((s, y));
    }
    let net = MlpParams::from_parts(h.field.sizes, theta, h.field.normalization, h.field.seed)?;
    let field = TrainedField::new(h.field.formulation, h.field.domain, h.field.lift, net);
    Ok(TrainCheckpoint { field, epoch: h.epoch, stage: h.stage, adam, lbfgs })
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize, reason: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LineSearchStats {
    pub steps: usize,
    pub strong_wolfe: usize,
    pub fallbacks: usize,
}

pub struct TrainResult {
    /// Parameters with the lowest validation PDE-RMSE.
    pub field: TrainedField,
    pub history: Vec<LossRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub status: TrainStatus,
    /// Hard runs: largest certified bound on `max |f - b|` over the audit samples across all epochs.
    pub boundary_bound_max: Option<f64>,
    /// Hard runs: largest directly evaluated `max |f - b|` at validated epochs.
    pub boundary_error_max: Option<f64>,
    pub boundary_tolerance: Option<f64>,
    pub line_search: LineSearchStats,
    pub admissibility: Option<AdmissibilityReport>,
}

/// Held-out PDE-RMSE on a fixed cloud drawn from its own random stream.
pub fn validate_pde(field: &dyn SurfaceField, ctx: &dyn CoefficientField, domain: &DomainSpec, n_val: usize, seed: u64) -> Result<f64> {
    if n_val == 0 {
        return Err(MeaError::EmptyCloud);
    }
    residual_rmse(field, ctx, &validation_cloud(domain, n_val, seed)?)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn validation_cloud(domain: &DomainSpec, n: usize, seed: u64) -> Result<crate::geometry::PointCloud> {
    sample_interior(domain, n, &mut stream_rng(seed, VALIDATION_STREAM))
}

struct Clouds {
    interior: InteriorSet,
    boundary: Option<BoundarySet>,
}

struct Session<'a> {
    cfg: &'a TrainConfig,
    problem: &'a Problem<'a>,
    lift: Option<LiftSpec>,
    sampler: ChaCha8Rng,
    validation: InteriorSet,
    reference: Option<&'a ReferenceSamples>,
    audit: Option<BoundaryAudit>,
    start: Instant,
    history: Vec<LossRecord>,
    best: Option<(f64, usize, Vec<f64>)>,
    boundary_bound_max: f64,
    boundary_error_max: f64,
}

impl<'a> Session<'a> {
    fn draw(&mut self) -> Result<Clouds> {
        let p = self.problem;
        let interior = sample_interior(&p.domain, self.cfg.n_pde, &mut self.sampler)?;
        let interior = InteriorSet::new(interior.points, p.coefficients, &p.domain, self.lift.as_ref())?;
        let boundary = match self.cfg.formulation {
            Formulation::Hard => None,
            Formulation::Soft => {
                let mut cloud = sample_boundary_uniform(&p.domain, self.cfg.n_bc, &mut self.sampler)?;
                if p.domain.is_circular() && self.cfg.n_bc_curv > 0 {
                    cloud.extend(sample_boundary_curvature(&p.domain, &p.profile, self.cfg.n_bc_curv, &mut self.sampler)?);
                }
                Some(BoundarySet::new(&cloud, &p.domain, &p.profile)?)
            }
        };
        Ok(Clouds { interior, boundary })
    }

    fn field(&self, net: &MlpParams) -> TrainedField {
        TrainedField::new(self.cfg.formulation, self.problem.domain, self.lift.clone(), net.clone())
    }

    fn wallclock(&self) -> f64 {
        if self.cfg.record_wallclock {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    fn audit_bound(&mut self, net: &MlpParams) {
        if let Some(a) = &self.audit {
            self.boundary_bound_max = self.boundary_bound_max.max(a.certified_bound(net.output_bound()));
        }
    }

    /// Logs one epoch; runs validation when due and tracks the best validated parameters.
    fn record(&mut self, net: &MlpParams, epoch: usize, stage: Stage, ev: &Evaluation, validate: bool) -> Result<()> {
        self.audit_bound(net);
        let (mut val, mut ref_rmse) = (None, None);
        if validate {
            let v = self.validation.loss(net)?.sqrt();
            val = Some(v);
            if let Some(reference) = self.reference {
                let vals = self.field(net).values(&reference.points)?;
                let sq: Vec<f64> = vals.iter().zip(&reference.values).map(|(a, b)| (a - b) * (a - b)).collect();
                ref_rmse = Some((pairwise_sum(&sq) / sq.len() as f64).sqrt());
            }
            if let Some(a) = &self.audit {
                self.boundary_error_max = self.boundary_error_max.max(a.max_error(net)?);
            }
            if self.best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                self.best = Some((v, epoch, net.theta().to_vec()));
            }
        }
        self.history.push(LossRecord {
            epoch,
            stage,
            l_pde: ev.l_pde,
            l_bc: ev.l_bc,
            w_pde: ev.w_pde,
            w_bc: ev.w_bc,
            total: ev.total,
            pde_rmse_train: ev.l_pde.sqrt(),
            pde_rmse_val: val,
            ref_rmse,
            wallclock_s: self.wallclock(),
        });
        Ok(())
    }

    fn checkpoint(&self, dir: Option<&Path>, net: &MlpParams, epoch: usize, stage: Stage, adam: &AdamState, lbfgs: &LbfgsState) -> Result<()> {
        if let (Some(dir), true) = (dir, self.cfg.checkpoint_every > 0 && epoch % self.cfg.checkpoint_every == 0) {
            write_train_checkpoint(&dir.join("checkpoint.bin"), &self.field(net), epoch, stage, adam, lbfgs)?;
        }
        Ok(())
    }
}

fn check_divergence(total: f64) -> Result<()> {
    if !total.is_finite() || total > DIVERGENCE_LIMIT {
        return Err(MeaError::Divergence(format!("training loss {total:e} exceeds the divergence guard")));
    }
    Ok(())
}

fn due(cfg: &TrainConfig, k: usize, last: usize) -> bool {
    k % cfg.validate_every == 0 || k == last
}

fn resample_due(cfg: &TrainConfig, k: usize) -> bool {
    cfg.resample_every > 0 && k > 0 && k % cfg.resample_every == 0
}

/// Options that do not affect the numerics.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub checkpoint_dir: Option<PathBuf>,
}

/// Runs both optimization stages and returns the best validated field.
pub fn train(
    cfg: &TrainConfig,
    problem: &Problem<'_>,
    reference: Option<&ReferenceSamples>,
    options: &TrainOptions,
) -> Result<TrainResult> {
    cfg.validate()?;
    problem.domain.validate()?;
    problem.profile.validate_for(&problem.domain)?;
    if let Some(rep) = problem.admissibility.as_ref().filter(|r| !r.passed) {
        log::warn!(
            "stress state is not admissible: worst margin {:e} at ({}, {})",
            rep.worst_margin,
            rep.worst_point.x1,
            rep.worst_point.x2
        );
    }
    if let Some(r) = reference.filter(|r| r.points.is_empty() || r.points.len() != r.values.len()) {
        return Err(MeaError::Config(format!("reference has {} points and {} values", r.points.len(), r.values.len())));
    }
    let lift = match cfg.formulation {
        Formulation::Hard => Some(fit_lift(&problem.domain, &problem.profile)?),
        Formulation::Soft => None,
    };
    let audit = match &lift {
        Some(l) if cfg.audit_points > 0 => Some(BoundaryAudit::uniform(&problem.domain, &problem.profile, l, cfg.audit_points)?),
        _ => None,
    };
    let (layers, width) = cfg.architecture();
    let mut net = init_mlp(layers, width, InputNormalization::for_domain(&problem.domain), cfg.seed)?;
    let validation = validation_cloud(&problem.domain, cfg.n_val, cfg.seed)?;
    let validation = InteriorSet::new(validation.points, problem.coefficients, &problem.domain, lift.as_ref())?;
    let mut s = Session {
        cfg,
        problem,
        lift,
        sampler: stream_rng(cfg.seed, SAMPLING_STREAM),
        validation,
        reference,
        audit,
        start: Instant::now(),
        history: Vec::new(),
        best: None,
        boundary_bound_max: 0.0,
        boundary_error_max: 0.0,
    };
    let ckpt_dir = options.checkpoint_dir.as_deref();
    if let Some(dir) = ckpt_dir {
        fs::create_dir_all(dir)?;
    }
    let mut stats = LineSearchStats::default();
    let mut adam = AdamState::new(net.len());
    let mut lbfgs = LbfgsState::default();

    let outcome = run_stages(&mut s, &mut net, &mut adam, &mut lbfgs, &mut stats, ckpt_dir);
    let status = match outcome {
        Ok(()) => TrainStatus::Completed,
        Err(MeaError::Divergence(reason)) => {
            let epoch = s.history.last().map_or(0, |r| r.epoch);
            log::error!("training diverged at epoch {epoch}: {reason}");
            TrainStatus::Diverged { epoch, reason }
        }
        Err(e) => return Err(e),
    };
    let (best_val, best_epoch, theta) = s.best.take().unwrap_or((f64::NAN, 0, net.theta().to_vec()));
    net.set_theta(&theta);
    let hard = cfg.formulation == Formulation::Hard && s.audit.is_some();
    Ok(TrainResult {
        field: s.field(&net),
        best_epoch,
        best_val,
        status,
        boundary_bound_max: hard.then_some(s.boundary_bound_max),
        boundary_error_max: hard.then_some(s.boundary_error_max),
        boundary_tolerance: s.audit.as_ref().map(|a| a.tolerance()),
        line_search: stats,
        admissibility: problem.admissibility.clone(),
        history: std::mem::take(&mut s.history),
    })
}

fn run_stages(
    s: &mut Session<'_>,
    net: &mut MlpParams,
    adam: &mut AdamState,
    lbfgs: &mut LbfgsState,
    stats: &mut LineSearchStats,
    ckpt_dir: Option<&Path>,
) -> Result<()> {
    let cfg = s.cfg;
    let form = cfg.formulation;
    let mut clouds = s.draw()?;
    let mut weight_rng = stream_rng(cfg.seed, WEIGHTING_STREAM);
    let mut weights = [1.0, 1.0];
    let mut loss_ref: Option<[f64; 2]> = None;
    let mut loss_prev = [0.0; 2];
    let mut stage1_best: Option<(f64, Vec<f64>, [f64; 2])> = None;

    // Stage 1: Adam.
    for k in 0..cfg.adam_epochs {
        if resample_due(cfg, k) {
            clouds = s.draw()?;
        }
        let weigh = |l_pde: f64, l_bc: Option<f64>| -> Result<(f64, Option<f64>)> {
            let Some(l_bc) = l_bc else { return Ok((1.0, None)) };
            let now = [l_pde, l_bc];
            match loss_ref {
                None => {
                    loss_ref = Some(now);
                }
                Some(r) => {
                    let w = relobralo_update(&cfg.relobralo, &weights, &now, &loss_prev, &r, &mut weight_rng)?;
                    weights = [w[0], w[1]];
                }
            }
            loss_prev = now;
            Ok((weights[0], Some(weights[1])))
        };
        let (ev, grad) = evaluate(net, form, &clouds.interior, clouds.boundary.as_ref(), weigh)?;
        check_divergence(ev.total)?;
        s.record(net, k, Stage::Adam, &ev, due(cfg, k, cfg.adam_epochs - 1))?;
        if stage1_best.as_ref().map_or(true, |(t, _, _)| ev.total < *t) {
            stage1_best = Some((ev.total, net.theta().to_vec(), [ev.w_pde, ev.w_bc.unwrap_or(0.0)]));
        }
        s.checkpoint(ckpt_dir, net, k, Stage::Adam, adam, lbfgs)?;
        adam_step(adam, net.theta_mut(), &grad, cfg.learning_rate)?;
    }

    if cfg.lbfgs_epochs == 0 {
        return Ok(());
    }
    // Stage 2: L-BFGS from the best Stage-1 parameters with the loss weights frozen.
    let frozen = match stage1_best {
        Some((_, theta, w)) => {
            net.set_theta(&theta);
            w
        }
        None => [1.0, 1.0],
    };
    let fixed = |_: f64, l_bc: Option<f64>| Ok((frozen[0], l_bc.map(|_| frozen[1])));
    let last_eval: RefCell<Option<Evaluation>> = RefCell::new(None);
    let template = net.clone();
    let objective = |theta: &[f64], clouds: &Clouds| -> Result<(f64, Vec<f64>)> {
        let mut trial = template.clone();
        trial.set_theta(theta);
        let (ev, grad) = evaluate(&trial, form, &clouds.interior, clouds.boundary.as_ref(), fixed)?;
        *last_eval.borrow_mut() = Some(ev);
        Ok((ev.total, grad))
    };
    let mut x = net.theta().to_vec();
    let (mut f, mut g) = objective(&x, &clouds)?;
    let mut ev = last_eval.borrow().expect("objective evaluated");
    let offset = cfg.adam_epochs;
    for k in 0..cfg.lbfgs_epochs {
        if resample_due(cfg, k) {
            clouds = s.draw()?;
            lbfgs.flush();
            (f, g) = objective(&x, &clouds)?;
            ev = last_eval.borrow().expect("objective evaluated");
        }
        check_divergence(f)?;
        net.set_theta(&x);
        s.record(net, offset + k, Stage::Lbfgs, &ev, due(cfg, k, cfg.lbfgs_epochs - 1))?;
        s.checkpoint(ckpt_dir, net, offset + k, Stage::Lbfgs, adam, lbfgs)?;
        let (fn_, gn, rep) = lbfgs_step(&cfg.lbfgs, lbfgs, &mut x, f, &g, |t| objective(t, &clouds))?;
        stats.steps += 1;
        if rep.fallback {
            stats.fallbacks += 1;
        } else if rep.satisfies_strong_wolfe(cfg.lbfgs.c1, cfg.lbfgs.c2) {
            stats.strong_wolfe += 1;
        }
        let cached = *last_eval.borrow();
        ev = match cached {
            Some(e) if e.total.to_bits() == fn_.to_bits() => e,
            _ => {
                objective(&x, &clouds)?;
                last_eval.borrow().expect("objective evaluated")
            }
        };
        (f, g) = (fn_, gn);
    }
    net.set_theta(&x);
    Ok(())
}
