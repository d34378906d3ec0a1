//! The two-phase training loop: rendering optimization of the Gaussian field,
//! then occupancy and parameter-consistency refinement of the networks.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::adaptive_fusion::{decisions_csv, fuse_modalities_op, FusedVoxelTensor, FusionModule, FusionVars, KDecision, KMode};
use crate::diffcore::ops::{gather_rows, scale, weighted_sum};
use crate::diffcore::{adamw_step, cosine_lr, AdamWState, Parameter, RngStream, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gaussian_field::{
    collect_anchors, densify, init_gaussians_op, write_field, Anchor, DensifyConfig, DensifyStats, GaussianField, InitNetParams, InitNetVars,
    PARAMS_PER_PRIMITIVE,
};
use crate::harness::config::RunConfig;
use crate::harness::scene::{cameras_to_text, Scene, BACKGROUND};
use crate::harness::stats::{k_table, KTable};
use crate::losses::{occupancy_loss_op, param_consistency_op, photometric_op, total_loss, total_loss_op, LossComponents, LossReport, Phase, SsimParams, CSV_HEADER};
use crate::occupancy::{iou_miou, occupancy_head_op, predict, HeadParams, HeadVars, OccupancyGrid, OccupancyMetrics};
use crate::renderer::{rasterize, rasterize_op, Image};
use crate::sparse_voxel::{range_filter, unproject_image_features, voxelize, Aabb, PointCloud, SparseVoxelTensor};

// rng keys
const MODEL_KEY: u64 = 1;
const INIT_KEY: u64 = 2;
const PHASE2_KEY: u64 = 3;
const EVAL_KEY: u64 = 4;

/// Fusion module, initialization network and occupancy head.
#[derive(Clone, Debug)]
pub struct Model {
    pub fusion: FusionModule<f64>,
    pub init: InitNetParams<f64>,
    pub head: HeadParams<f64>,
}

pub struct ModelVars {
    pub fusion: FusionVars,
    pub init: InitNetVars,
    pub head: HeadVars,
}

impl Model {
    pub fn new(cfg: &RunConfig, num_classes: usize, rng: &RngStream) -> Result<Self> {
        let c4 = 4 * cfg.channels;
        Ok(Self {
            fusion: FusionModule::new(cfg.channels, cfg.candidates.clone(), cfg.tau, &mut rng.child(0))?,
            init: InitNetParams::new(c4, cfg.init_hidden, &mut rng.child(1)),
            head: HeadParams::new(c4, cfg.head_hidden, num_classes, &mut rng.child(2)),
        })
    }

    pub fn bind(&self, tape: &mut Tape<f64>) -> ModelVars {
        ModelVars { fusion: self.fusion.bind(tape), init: self.init.bind(tape), head: self.head.bind(tape) }
    }

    pub fn parameters(&self) -> Vec<&Parameter<f64>> {
        let mut v = self.fusion.parameters();
        v.extend(self.init.parameters());
        v.extend(self.head.parameters());
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        let mut v = self.fusion.parameters_mut();
        v.extend(self.init.parameters_mut());
        v.extend(self.head.parameters_mut());
        v
    }

    /// Gradients of every model parameter, in [`parameters`](Self::parameters) order.
    fn grads(&self, g: &crate::diffcore::Gradients<f64>, vars: &ModelVars) -> Vec<Tensor<f64>> {
        let mut probe = self.clone();
        for p in probe.parameters_mut() {
            p.zero_grad();
        }
        probe.fusion.accumulate(g, &vars.fusion);
        probe.init.accumulate(g, &vars.init);
        probe.head.accumulate(g, &vars.head);
        probe.parameters().into_iter().map(|p| p.grad.clone()).collect()
    }
}

/// Sensor inputs after filtering and voxelization.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub points: PointCloud<f64>,
    pub lidar: SparseVoxelTensor<f64>,
    pub image: SparseVoxelTensor<f64>,
}

pub fn prepare_inputs(scene: &Scene, cfg: &RunConfig) -> Result<Inputs> {
    let g = &scene.grid;
    let bounds = Aabb { min: g.origin, max: g.max_corner() };
    let points = range_filter(&scene.points, &bounds, cfg.filter_min_neighbors, cfg.filter_radius)?;
    let lidar = voxelize(&points, g, cfg.channels)?;
    let image = unproject_image_features(&scene.images, &scene.depths, &scene.cameras, g, cfg.channels)?;
    Ok(Inputs { points, lidar, image })
}

/// Per-step gradients of one phase's objective with respect to every
/// parameter group, whether or not that phase updates it.
pub struct StepGrads {
    pub report: LossReport<f64>,
    pub model: Vec<Tensor<f64>>,
    pub gaussians: [Tensor<f64>; 5],
}

#[derive(Clone, Debug)]
pub struct MetricsReport {
    /// `(global step, report)`.
    pub losses: Vec<(usize, LossReport<f64>)>,
    pub metrics: OccupancyMetrics,
    pub k_table: KTable,
    pub decisions: Vec<KDecision<f64>>,
    pub densify: Vec<DensifyStats>,
    pub num_gaussians: usize,
    pub outer_loops: usize,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn losses_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for (step, r) in &self.losses {
            s.push_str(&r.csv_row(*step));
            s.push('\n');
        }
        s
    }

    /// `L_rgb` of every phase-1 step, in order.
    pub fn l_rgb_curve(&self) -> Vec<f64> {
        self.losses.iter().filter(|(_, r)| r.phase == Phase::DuringIteration).map(|(_, r)| r.l_rgb).collect()
    }

    /// Deterministic summary (no timings).
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "iou = {}", m.iou);
        let _ = writeln!(s, "miou = {}", m.miou);
        for (c, v) in m.per_class.iter().enumerate() {
            let _ = writeln!(s, "iou_class_{} = {}", c + 1, v.map_or("absent".to_string(), |x| x.to_string()));
        }
        let _ = writeln!(s, "gaussians = {}", self.num_gaussians);
        let _ = writeln!(s, "outer_loops = {}", self.outer_loops);
        for (i, d) in self.densify.iter().enumerate() {
            let _ = writeln!(s, "densify_{i} = cloned {} split {} pruned {}", d.cloned, d.split, d.pruned);
        }
        s
    }
}

fn check_finite(step: usize, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step, component: name.into() })
    }
}

/// Training state shared by both phases.
pub struct Trainer<'a> {
    pub cfg: RunConfig,
    pub scene: &'a Scene,
    pub inputs: Inputs,
    pub model: Model,
    /// Current Gaussian parameters; `field` carries provenance and anchors.
    pub gaussians: [Parameter<f64>; 5],
    pub field: GaussianField<f64>,
    /// Θ⁽⁰⁾ of the current outer loop.
    pub field_init: GaussianField<f64>,
    pub anchors: Vec<Anchor<f64>>,
    /// Converged rows of anchored primitives and the anchor each belongs to.
    snapshot: Option<([Tensor<f64>; 5], Vec<usize>)>,
    gauss_opt: Vec<AdamWState<f64>>,
    model_opt: Vec<AdamWState<f64>>,
    rng: RngStream,
    ssim: SsimParams,
    pub losses: Vec<(usize, LossReport<f64>)>,
    pub densify_log: Vec<DensifyStats>,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &RunConfig, scene: &'a Scene) -> Result<Self> {
        cfg.validate()?;
        let rng = RngStream::new(cfg.seed);
        let inputs = prepare_inputs(scene, cfg)?;
        let model = Model::new(cfg, scene.spec.num_classes, &rng.child(MODEL_KEY))?;
        let model_opt = model.parameters().iter().map(|p| AdamWState::for_param(p, cfg.lr, cfg.weight_decay)).collect();
        let mut t = Self {
            cfg: cfg.clone(),
            scene,
            inputs,
            model,
            gaussians: GaussianField::default().to_parameters(),
            field: GaussianField::default(),
            field_init: GaussianField::default(),
            anchors: Vec::new(),
            snapshot: None,
            gauss_opt: Vec::new(),
            model_opt,
            rng,
            ssim: SsimParams::default(),
            losses: Vec::new(),
            densify_log: Vec::new(),
            step: 0,
        };
        t.initialize(0)?;
        Ok(t)
    }

    fn fuse(&self, tape: &mut Tape<f64>, vars: &FusionVars, rng: &RngStream) -> Result<(FusedVoxelTensor<f64>, Var, Vec<KDecision<f64>>)> {
        let (img, lid) = (&self.inputs.image, &self.inputs.lidar);
        let fi = tape.constant(img.features.clone());
        let fl = tape.constant(lid.features.clone());
        let out = fuse_modalities_op(tape, img, lid, fi, fl, &self.model.fusion, vars, rng, KMode::StraightThrough)?;
        let fused = FusedVoxelTensor { spec: self.scene.grid, indices: out.indices, features: tape.value(out.features).clone() };
        let mut decisions = out.image_decisions;
        decisions.extend(out.lidar_decisions);
        Ok((fused, out.features, decisions))
    }

    /// Fuses with the current networks and seeds a fresh Θ⁽⁰⁾.
    pub fn initialize(&mut self, outer: usize) -> Result<()> {
        let mut tape = Tape::new();
        let vars = self.model.bind(&mut tape);
        let (fused, fv, _) = self.fuse(&mut tape, &vars.fusion, &self.rng.child(INIT_KEY).child(outer as u64))?;
        let anchors: Vec<Anchor<f64>> = collect_anchors(&self.inputs.points, &fused, self.cfg.anchor_norm_threshold)?
            .into_iter()
            .filter(|a| fused.spec.index_of(a.position).is_some())
            .collect();
        let out = init_gaussians_op(&mut tape, &fused, fv, &anchors, &self.model.init, &vars.init)?;
        self.anchors = anchors;
        self.field = out.field;
        self.field_init = self.field.clone();
        self.gaussians = self.field.to_parameters();
        self.reset_gauss_opt();
        self.snapshot = None;
        Ok(())
    }

    fn reset_gauss_opt(&mut self) {
        self.gauss_opt = self.gaussians.iter().map(|p| AdamWState::for_param(p, 0.0, 0.0)).collect();
    }

    fn gauss_lrs(&self) -> [f64; 5] {
        let c = &self.cfg;
        [c.lr_mu, c.lr_log_scale, c.lr_rot, c.lr_opacity, c.lr_color]
    }

    /// Builds the objective of `phase` on one tape with every parameter group
    /// bound, and returns the gradient of each group.
    pub fn step_grads(&self, phase: Phase, step: usize) -> Result<StepGrads> {
        let mut tape = Tape::new();
        let mvars = self.model.bind(&mut tape);
        let gvars: Vec<Var> = self.gaussians.iter().map(|p| tape.param(p)).collect();
        let gvars: [Var; 5] = [gvars[0], gvars[1], gvars[2], gvars[3], gvars[4]];
        let mut comps = LossComponents::default();
        let (l_rgb, l_occ, l_pc, lambda) = match phase {
            Phase::DuringIteration => {
                let nv = self.scene.cameras.len() as f64;
                let mut terms = Vec::with_capacity(self.scene.cameras.len());
                let (mut l1, mut ds) = (0.0, 0.0);
                for (cam, target) in self.scene.cameras.iter().zip(&self.scene.images) {
                    let (img, _) = rasterize_op(&mut tape, gvars, cam, BACKGROUND)?;
                    let (v, pm) = photometric_op(&mut tape, img, target, self.cfg.ssim_lambda, &self.ssim)?;
                    l1 += pm.l1 / nv;
                    ds += pm.dssim / nv;
                    terms.push((1.0 / nv, v));
                }
                let l = weighted_sum(&mut tape, &terms)?;
                comps.l1 = Some(l1);
                comps.dssim = Some(ds);
                comps.l_rgb = Some(tape.scalar(l));
                check_finite(step, "l_rgb", tape.scalar(l))?;
                (Some(l), None, None, 0.0)
            }
            Phase::AfterIteration => {
                let rng = self.rng.child(PHASE2_KEY).child(step as u64);
                let (fused, fv, _) = self.fuse(&mut tape, &mvars.fusion, &rng)?;
                let init = init_gaussians_op(&mut tape, &fused, fv, &self.anchors, &self.model.init, &mvars.init)?;
                let logits = occupancy_head_op(&mut tape, &fused, fv, &self.model.head, &mvars.head)?;
                let occ = occupancy_loss_op(&mut tape, logits, &self.scene.gt.labels, None)?;
                let (target, rows) = self.snapshot.as_ref().ok_or_else(|| Error::Schedule("phase 2 before a Θ_final snapshot".into()))?;
                let pc = if rows.is_empty() {
                    tape.constant(Tensor::scalar(0.0))
                } else {
                    let picked: Vec<Var> = init.params.iter().map(|&p| gather_rows(&mut tape, p, rows)).collect::<Result<_>>()?;
                    let raw = param_consistency_op(&mut tape, [picked[0], picked[1], picked[2], picked[3], picked[4]], target)?;
                    scale(&mut tape, raw, 1.0 / (rows.len() * PARAMS_PER_PRIMITIVE) as f64)
                };
                comps.l_ce = Some(tape.scalar(occ.ce));
                comps.l_lovasz = Some(tape.scalar(occ.lovasz));
                comps.l_occ = Some(tape.scalar(occ.total));
                comps.l_pc = Some(tape.scalar(pc));
                check_finite(step, "l_ce", tape.scalar(occ.ce))?;
                check_finite(step, "l_lovasz", tape.scalar(occ.lovasz))?;
                check_finite(step, "l_pc", tape.scalar(pc))?;
                let lambda = if self.cfg.use_pc { self.cfg.lambda } else { 0.0 };
                (None, Some(occ.total), Some(pc), lambda)
            }
        };
        let total = total_loss_op(&mut tape, phase, l_rgb, l_occ, l_pc, lambda)?;
        let report = total_loss(phase, &comps, lambda)?;
        check_finite(step, "total", tape.scalar(total))?;
        let g = tape.backward(total)?;
        let model = self.model.grads(&g, &mvars);
        let gaussians = std::array::from_fn(|i| g.wrt(&tape, gvars[i]));
        Ok(StepGrads { report, model, gaussians })
    }

    /// One rendering-optimization step; returns the position gradient.
    pub fn phase1_step(&mut self, iter: usize) -> Result<Tensor<f64>> {
        let sg = self.step_grads(Phase::DuringIteration, self.step)?;
        let lrs = self.gauss_lrs();
        for (i, (p, s)) in self.gaussians.iter_mut().zip(&mut self.gauss_opt).enumerate() {
            p.grad = sg.gaussians[i].clone();
            adamw_step(p, s, cosine_lr(iter, self.cfg.phase1_iters, lrs[i])?)?;
            p.zero_grad();
        }
        self.losses.push((self.step, sg.report));
        self.step += 1;
        Ok(sg.gaussians[0].clone())
    }

    fn sync_field(&mut self) -> Result<()> {
        let vals: [Tensor<f64>; 5] = std::array::from_fn(|i| self.gaussians[i].value.clone());
        self.field.set_from_tensors(&vals)
    }

    pub fn densify_now(&mut self, mean_pos_grad: &Tensor<f64>) -> Result<DensifyStats> {
        self.sync_field()?;
        let grads: Vec<[f64; 3]> = (0..self.field.len()).map(|i| {
            let r = mean_pos_grad.row(i);
            [r[0], r[1], r[2]]
        }).collect();
        let cfg = DensifyConfig {
            grad_threshold: self.cfg.densify_grad_threshold,
            scale_threshold: self.cfg.densify_scale_threshold,
            min_opacity: self.cfg.prune_opacity,
            voxel_size: self.scene.grid.voxel_size,
        };
        let (field, stats) = densify(&self.field, &grads, &cfg);
        if field.len() > self.cfg.max_gaussians {
            log::info!("densify skipped: {} primitives would exceed {}", field.len(), self.cfg.max_gaussians);
            return Ok(DensifyStats::default());
        }
        self.field = field;
        self.gaussians = self.field.to_parameters();
        self.reset_gauss_opt();
        self.densify_log.push(stats);
        Ok(stats)
    }

    pub fn run_phase1(&mut self) -> Result<()> {
        let mut acc: Option<Tensor<f64>> = None;
        let mut count = 0usize;
        for iter in 0..self.cfg.phase1_iters {
            let g = self.phase1_step(iter)?;
            match &mut acc {
                Some(a) if a.shape() == g.shape() => a.add_assign(&g),
                _ => acc = Some(g),
            }
            count += 1;
            let every = self.cfg.densify_every;
            if every > 0 && (iter + 1) % every == 0 && iter + 1 < self.cfg.phase1_iters {
                let mean = acc.take().expect("accumulated").scale(1.0 / count as f64);
                let stats = self.densify_now(&mean)?;
                log::info!("step {}: densify {stats:?}, {} primitives", self.step, self.field.len());
                count = 0;
            }
        }
        self.sync_field()
    }

    /// Freezes the converged field as the consistency target.
    pub fn take_snapshot(&mut self) -> Result<()> {
        self.sync_field()?;
        let t = self.field.to_tensors();
        let rows: Vec<(usize, usize)> = self.field.anchor.iter().enumerate().filter_map(|(i, a)| a.map(|a| (i, a))).collect();
        let pick = |m: &Tensor<f64>| {
            let w = m.cols();
            Tensor::new(&[rows.len(), w], rows.iter().flat_map(|&(i, _)| m.row(i).to_vec()).collect()).expect("rows")
        };
        let target = std::array::from_fn(|g| pick(&t[g]));
        self.snapshot = Some((target, rows.into_iter().map(|(_, a)| a).collect()));
        Ok(())
    }

    pub fn phase2_step(&mut self, iter: usize) -> Result<()> {
        let sg = self.step_grads(Phase::AfterIteration, self.step)?;
        let lr = cosine_lr(iter, self.cfg.phase2_iters, self.cfg.lr)?;
        for ((p, g), s) in self.model.parameters_mut().into_iter().zip(sg.model).zip(&mut self.model_opt) {
            p.grad = g;
            adamw_step(p, s, lr)?;
            p.zero_grad();
        }
        self.losses.push((self.step, sg.report));
        self.step += 1;
        Ok(())
    }

    pub fn run_phase2(&mut self) -> Result<()> {
        for iter in 0..self.cfg.phase2_iters {
            self.phase2_step(iter)?;
        }
        Ok(())
    }

    /// Fusion and head with the evaluation noise stream.
    pub fn evaluate(&self) -> Result<(OccupancyGrid<f64>, OccupancyMetrics, Vec<KDecision<f64>>)> {
        let mut tape = Tape::new();
        let vars = self.model.bind(&mut tape);
        let (fused, fv, decisions) = self.fuse(&mut tape, &vars.fusion, &self.rng.child(EVAL_KEY))?;
        let logits = occupancy_head_op(&mut tape, &fused, fv, &self.model.head, &vars.head)?;
        let pred = predict(tape.value(logits), &self.scene.grid)?;
        let metrics = iou_miou(&pred, &self.scene.gt, self.scene.spec.num_classes)?;
        Ok((pred, metrics, decisions))
    }

    pub fn renders(&self) -> Vec<Image<f64>> {
        self.scene.cameras.iter().map(|c| rasterize(&self.field, c, BACKGROUND).0).collect()
    }
}

/// Full pipeline; when `out` is given every artifact is written there.
pub fn train(cfg: &RunConfig, scene: &Scene, out: Option<&Path>) -> Result<MetricsReport> {
    let start = Instant::now();
    let mut t = Trainer::new(cfg, scene)?;
    for outer in 0..cfg.outer_loops {
        if outer > 0 {
            t.initialize(outer)?;
        }
        if cfg.use_rgb {
            t.run_phase1()?;
        }
        t.take_snapshot()?;
        t.run_phase2()?;
    }
    let (pred, metrics, decisions) = t.evaluate()?;
    let report = MetricsReport {
        losses: t.losses.clone(),
        metrics,
        k_table: k_table(decisions.iter().map(|d| d.k), &cfg.candidates),
        decisions,
        densify: t.densify_log.clone(),
        num_gaussians: t.field.len(),
        outer_loops: cfg.outer_loops,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
        std::fs::write(dir.join("losses.csv"), report.losses_csv())?;
        std::fs::write(dir.join("k_decisions.csv"), decisions_csv(&report.decisions))?;
        std::fs::write(dir.join("k_stats.txt"), report.k_table.to_string())?;
        std::fs::write(dir.join("metrics.txt"), report.summary())?;
        std::fs::write(dir.join("timing.txt"), format!("wall_clock_secs = {}\n", report.wall_clock_secs))?;
        std::fs::write(dir.join("cameras.txt"), cameras_to_text(&scene.cameras))?;
        pred.write(dir.join("pred_occupancy.txt"))?;
        write_field(&t.field_init, dir.join("field_init.txt"))?;
        write_field(&t.field, dir.join("field_final.txt"))?;
        for (i, img) in t.renders().iter().enumerate() {
            img.write_ppm(dir.join(format!("render_{i}.ppm")))?;
        }
    }
    Ok(report)
}
