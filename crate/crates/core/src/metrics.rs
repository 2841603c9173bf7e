//! Pose errors and scores.
//!
//! Single-pose estimates are scored by MSSD/MSPD recall against per-image
//! symmetry patterns, following the BOP matching protocol. Pose-distribution
//! estimates are scored by probability-weighted precision and recall against
//! the equiprobable ground-truth pose sets, with MSD/MPD as the registration
//! distance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::annotate::{ImageKey, InstanceDistribution};
use crate::bop::{ResultRow, Target};
use crate::error::{Error, Result};
use crate::geom::{CameraModel, PointSet, RigidTransform, Vec2};

/// MSSD thresholds as fractions of the object diameter.
pub const DEFAULT_MSSD_FRACTIONS: [f64; 10] =
    [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];
/// MSPD thresholds in units of `image_width / 640` px.
pub const DEFAULT_MSPD_PIXELS: [f64; 10] =
    [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

/// Maximum surface distance (mm) between the model under two poses.
pub fn msd(est: &RigidTransform, gt: &RigidTransform, pts: &PointSet) -> f64 {
    pts.positions()
        .iter()
        .map(|x| (est.apply(x) - gt.apply(x)).norm())
        .fold(0.0, f64::max)
}

fn project_all(pose: &RigidTransform, pts: &PointSet, cam: &CameraModel) -> Result<Vec<Vec2>> {
    pts.positions()
        .iter()
        .map(|x| cam.project(&pose.apply(x)))
        .collect()
}

fn max_pixel_gap(
    a: &[Vec2],
    pose: &RigidTransform,
    pts: &PointSet,
    cam: &CameraModel,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (pa, x) in a.iter().zip(pts.positions()) {
        let pb = cam.project(&pose.apply(x))?;
        worst = worst.max((pa - pb).norm());
    }
    Ok(worst)
}

/// Maximum projected distance (px). Fails when a point is behind the camera.
pub fn mpd(
    est: &RigidTransform,
    gt: &RigidTransform,
    pts: &PointSet,
    cam: &CameraModel,
) -> Result<f64> {
    let a = project_all(est, pts, cam)?;
    max_pixel_gap(&a, gt, pts, cam)
}

fn identity_pattern() -> [RigidTransform; 1] {
    [RigidTransform::identity()]
}

/// `min_S msd(est, gt ∘ S)` over the pattern; an empty pattern means `{Id}`.
pub fn mssd(
    est: &RigidTransform,
    gt: &RigidTransform,
    pattern: &[RigidTransform],
    pts: &PointSet,
) -> f64 {
    let id = identity_pattern();
    let pattern = if pattern.is_empty() { &id[..] } else { pattern };
    let moved: Vec<_> = pts.positions().iter().map(|x| est.apply(x)).collect();
    pattern
        .iter()
        .map(|s| {
            let g = gt.compose(s);
            moved
                .iter()
                .zip(pts.positions())
                .map(|(e, x)| (e - g.apply(x)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `min_S mpd(est, gt ∘ S)`. Fails when `est` puts a point behind the camera;
/// pattern elements that do so are ignored unless all of them do.
pub fn mspd(
    est: &RigidTransform,
    gt: &RigidTransform,
    pattern: &[RigidTransform],
    pts: &PointSet,
    cam: &CameraModel,
) -> Result<f64> {
    let id = identity_pattern();
    let pattern = if pattern.is_empty() { &id[..] } else { pattern };
    let a = project_all(est, pts, cam)?;
    let mut best: Option<f64> = None;
    let mut first_err = None;
    for s in pattern {
        match max_pixel_gap(&a, &gt.compose(s), pts, cam) {
            Ok(d) => best = Some(best.map_or(d, |b| b.min(d))),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("pattern is non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub pose: RigidTransform,
    pub score: f64,
    pub time: f64,
}

impl PoseEstimate {
    pub fn from_rows(rows: &[ResultRow]) -> Vec<Self> {
        rows.iter()
            .map(|r| PoseEstimate {
                scene_id: r.scene_id,
                im_id: r.im_id,
                obj_id: r.obj_id,
                pose: r.pose,
                score: r.score,
                time: r.time,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub pose: RigidTransform,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEstimate {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    /// Ground-truth instance this distribution is meant for, when known.
    pub inst_id: Option<u32>,
    pub modes: Vec<Mode>,
}

/// Total order on poses used to break ties independently of file order.
fn pose_cmp(a: &RigidTransform, b: &RigidTransform) -> Ordering {
    let ka = a
        .rotation_row_major()
        .into_iter()
        .chain(a.translation_array());
    let kb = b
        .rotation_row_major()
        .into_iter()
        .chain(b.translation_array());
    ka.zip(kb)
        .map(|(x, y)| x.total_cmp(&y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl DistributionEstimate {
    /// Rescales probabilities to sum to 1; all-zero or absent weights become
    /// uniform.
    pub fn normalize(&mut self) {
        let sum: f64 = self.modes.iter().map(|m| m.prob).sum();
        let n = self.modes.len() as f64;
        for m in &mut self.modes {
            m.prob = if sum > 0.0 { m.prob / sum } else { 1.0 / n };
        }
    }

    /// Keeps the `k` most probable modes and renormalizes.
    pub fn truncate(&mut self, k: usize) {
        if self.modes.len() <= k {
            return;
        }
        self.modes.sort_by(|a, b| {
            b.prob
                .total_cmp(&a.prob)
                .then_with(|| pose_cmp(&a.pose, &b.pose))
        });
        self.modes.truncate(k);
        self.normalize();
    }

    /// Groups rows by `(scene, image, object[, inst_id])`. Rows without
    /// `mode_prob` weigh equally. Output is sorted by key and, within a
    /// distribution, by pose, so it does not depend on row order.
    pub fn from_rows(rows: &[ResultRow], max_modes: Option<usize>) -> Vec<Self> {
        let mut groups: BTreeMap<(u32, u32, u32, Option<u32>), Vec<&ResultRow>> = BTreeMap::new();
        for r in rows {
            groups
                .entry((r.scene_id, r.im_id, r.obj_id, r.inst_id))
                .or_default()
                .push(r);
        }
        groups
            .into_iter()
            .map(|((scene_id, im_id, obj_id, inst_id), rows)| {
                let any_prob = rows.iter().any(|r| r.mode_prob.is_some());
                let mut modes: Vec<Mode> = rows
                    .iter()
                    .map(|r| Mode {
                        pose: r.pose,
                        prob: if any_prob {
                            r.mode_prob.unwrap_or(0.0)
                        } else {
                            1.0
                        },
                    })
                    .collect();
                modes.sort_by(|a, b| pose_cmp(&a.pose, &b.pose).then(b.prob.total_cmp(&a.prob)));
                let mut d = DistributionEstimate {
                    scene_id,
                    im_id,
                    obj_id,
                    inst_id,
                    modes,
                };
                d.normalize();
                if let Some(k) = max_modes {
                    d.truncate(k);
                }
                d
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Mssd,
    Mspd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Msd,
    Mpd,
}

/// How the recall term weights a matched ground-truth pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClampMode {
    /// `min(p, 1/|GT|)`: recall stays in `[0, 1]`.
    #[default]
    Upper,
    /// `max(p, 1/|GT|)`.
    Literal,
}

/// Registration distance; a pose with points behind the camera is infinitely
/// far under MPD.
pub fn pose_distance(
    metric: DistanceMetric,
    a: &RigidTransform,
    b: &RigidTransform,
    pts: &PointSet,
    cam: &CameraModel,
) -> f64 {
    match metric {
        DistanceMetric::Msd => msd(a, b, pts),
        DistanceMetric::Mpd => mpd(a, b, pts, cam).unwrap_or(f64::INFINITY),
    }
}

/// `d[j][i]` between estimate mode `j` and ground-truth pose `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n_gt: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(
        metric: DistanceMetric,
        est: &DistributionEstimate,
        gt_poses: &[RigidTransform],
        pts: &PointSet,
        cam: &CameraModel,
    ) -> Self {
        let mut d = Vec::with_capacity(est.modes.len() * gt_poses.len());
        for m in &est.modes {
            for g in gt_poses {
                d.push(pose_distance(metric, &m.pose, g, pts, cam));
            }
        }
        Self {
            n_gt: gt_poses.len(),
            d,
        }
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.d[j * self.n_gt..(j + 1) * self.n_gt]
    }

    fn n_est(&self) -> usize {
        self.d.len().checked_div(self.n_gt).unwrap_or(0)
    }
}

/// `Σ_j p_j · [min_i d(j, i) < τ]`.
pub fn precision_at(est: &DistributionEstimate, m: &DistanceMatrix, tau: f64) -> f64 {
    (0..m.n_est())
        .filter(|&j| m.row(j).iter().any(|&d| d < tau))
        .map(|j| est.modes[j].prob)
        .sum()
}

/// `Σ_i clamp(p_ĵ) · [d(ĵ, i) < τ]` with `ĵ` the mode nearest to GT pose `i`.
pub fn recall_at(
    est: &DistributionEstimate,
    m: &DistanceMatrix,
    tau: f64,
    clamp: ClampMode,
) -> f64 {
    if m.n_gt == 0 {
        return 0.0;
    }
    let share = 1.0 / m.n_gt as f64;
    (0..m.n_gt)
        .filter_map(|i| {
            let (j, d) = (0..m.n_est())
                .map(|j| (j, m.row(j)[i]))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            (d < tau).then(|| {
                let p = est.modes[j].prob;
                match clamp {
                    ClampMode::Upper => p.min(share),
                    ClampMode::Literal => p.max(share),
                }
            })
        })
        .sum()
}

pub fn dist_precision(
    est: &DistributionEstimate,
    gt: &InstanceDistribution,
    metric: DistanceMetric,
    pts: &PointSet,
    cam: &CameraModel,
    tau_d: f64,
) -> f64 {
    let m = DistanceMatrix::compute(metric, est, &gt.poses(), pts, cam);
    precision_at(est, &m, tau_d)
}

pub fn dist_recall(
    est: &DistributionEstimate,
    gt: &InstanceDistribution,
    metric: DistanceMetric,
    pts: &PointSet,
    cam: &CameraModel,
    tau_d: f64,
    clamp: ClampMode,
) -> f64 {
    let m = DistanceMatrix::compute(metric, est, &gt.poses(), pts, cam);
    recall_at(est, &m, tau_d, clamp)
}

/// Per-object data needed for scoring.
#[derive(Debug, Clone)]
pub struct EvalModel {
    pub points: PointSet,
    pub diameter: f64,
}

type GroupKey = (u32, u32, u32);

/// Annotated evaluation targets with the models and cameras to score them.
#[derive(Debug, Clone)]
pub struct EvalContext<'a> {
    /// Non-skipped instances grouped by `(scene, image, object)`, sorted by `inst_idx`.
    groups: BTreeMap<GroupKey, Vec<&'a InstanceDistribution>>,
    models: &'a BTreeMap<u32, EvalModel>,
    cameras: &'a BTreeMap<ImageKey, CameraModel>,
    /// Object-level patterns that replace the per-image ones (BOP-style scoring).
    pattern_override: Option<&'a BTreeMap<u32, Vec<RigidTransform>>>,
}

impl<'a> EvalContext<'a> {
    /// Skipped instances are excluded; with `targets`, only listed
    /// `(scene, image, object)` triples are kept.
    pub fn new(
        annotations: &'a [InstanceDistribution],
        models: &'a BTreeMap<u32, EvalModel>,
        cameras: &'a BTreeMap<ImageKey, CameraModel>,
        targets: Option<&[Target]>,
    ) -> Result<Self> {
        let allowed: Option<BTreeSet<GroupKey>> =
            targets.map(|t| t.iter().map(|t| (t.scene_id, t.im_id, t.obj_id)).collect());
        let mut groups: BTreeMap<GroupKey, Vec<&InstanceDistribution>> = BTreeMap::new();
        for a in annotations.iter().filter(|a| !a.is_skipped()) {
            let key = (a.scene_id, a.im_id, a.obj_id);
            if allowed.as_ref().is_some_and(|s| !s.contains(&key)) {
                continue;
            }
            if !models.contains_key(&a.obj_id) {
                return Err(Error::MissingMesh(a.obj_id));
            }
            let image = ImageKey {
                scene_id: a.scene_id,
                im_id: a.im_id,
            };
            if !cameras.contains_key(&image) {
                return Err(Error::Dataset(format!(
                    "no camera for scene {} image {}",
                    a.scene_id, a.im_id
                )));
            }
            groups.entry(key).or_default().push(a);
        }
        for list in groups.values_mut() {
            list.sort_by_key(|a| a.inst_idx);
        }
        Ok(Self {
            groups,
            models,
            cameras,
            pattern_override: None,
        })
    }

    pub fn with_pattern_override(
        mut self,
        patterns: &'a BTreeMap<u32, Vec<RigidTransform>>,
    ) -> Self {
        self.pattern_override = Some(patterns);
        self
    }

    pub fn n_targets(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    fn camera(&self, key: &GroupKey) -> &CameraModel {
        &self.cameras[&ImageKey {
            scene_id: key.0,
            im_id: key.1,
        }]
    }

    fn pattern<'b>(&'b self, gt: &'b InstanceDistribution) -> &'b [RigidTransform] {
        match self.pattern_override.and_then(|p| p.get(&gt.obj_id)) {
            Some(p) => p,
            None => &gt.symmetries,
        }
    }
}

/// Threshold θ in absolute units for a relative threshold `t`.
fn absolute_threshold(metric: ErrorMetric, t: f64, model: &EvalModel, cam: &CameraModel) -> f64 {
    match metric {
        ErrorMetric::Mssd => t * model.diameter,
        ErrorMetric::Mspd => t * cam.threshold_unit(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: ErrorMetric,
    /// Relative thresholds: diameter fractions (MSSD) or `width/640` px multiples (MSPD).
    pub thresholds: Vec<f64>,
    pub recall_per_threshold: Vec<f64>,
    /// Pooled over all targets and averaged over thresholds.
    pub recall: f64,
    /// Per-object recall averaged over thresholds.
    pub per_object: BTreeMap<u32, f64>,
    /// Mean of `per_object`.
    pub recall_object_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub metrics: Vec<MetricReport>,
    /// Mean of the pooled recalls of the evaluated metrics.
    pub score: f64,
    pub n_targets: usize,
    pub n_estimates: usize,
    /// `[scene, image, object]` targets without any estimate.
    pub missing_targets: Vec<[u32; 3]>,
    /// `[scene, image, object]` estimate groups matching no target.
    pub unmatched_estimates: Vec<[u32; 3]>,
}

fn group_estimates<T>(
    estimates: &[T],
    key: impl Fn(&T) -> GroupKey,
) -> BTreeMap<GroupKey, Vec<&T>> {
    let mut out: BTreeMap<GroupKey, Vec<&T>> = BTreeMap::new();
    for e in estimates {
        out.entry(key(e)).or_default().push(e);
    }
    out
}

/// Greedy BOP matching for one group at one threshold: estimates in score
/// order each take the unmatched GT with the lowest error below θ.
fn greedy_matches(errors: &[Vec<f64>], thresholds: &[f64]) -> usize {
    let n_gt = errors.first().map_or(0, Vec::len);
    let mut taken = vec![false; n_gt];
    let mut matched = 0;
    for row in errors {
        let best = (0..n_gt)
            .filter(|&i| !taken[i] && row[i] < thresholds[i])
            .min_by(|&a, &b| row[a].total_cmp(&row[b]));
        if let Some(i) = best {
            taken[i] = true;
            matched += 1;
        }
    }
    matched
}

/// Recall of single-pose estimates under one error metric. Per
/// `(scene, image, object)`, the `n` highest-scored estimates are kept (`n`
/// = number of annotated instances) and matched greedily; an estimate is
/// correct when its error is `< θ`. Missing estimates count as misses.
pub fn single_pose_recall(
    estimates: &[PoseEstimate],
    ctx: &EvalContext,
    metric: ErrorMetric,
    thresholds: &[f64],
) -> MetricReport {
    let by_group = group_estimates(estimates, |e| (e.scene_id, e.im_id, e.obj_id));
    let empty = Vec::new();
    // matched[group][threshold]
    let per_group: Vec<(u32, usize, Vec<usize>)> = ctx
        .groups
        .par_iter()
        .map(|(key, gts)| {
            let model = &ctx.models[&key.2];
            let cam = ctx.camera(key);
            let mut ests: Vec<&PoseEstimate> = by_group.get(key).unwrap_or(&empty).clone();
            ests.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then_with(|| pose_cmp(&a.pose, &b.pose))
            });
            ests.truncate(gts.len());
            let errors: Vec<Vec<f64>> = ests
                .iter()
                .map(|e| {
                    gts.iter()
                        .map(|g| match metric {
                            ErrorMetric::Mssd => {
                                mssd(&e.pose, &g.gt_pose, ctx.pattern(g), &model.points)
                            }
                            ErrorMetric::Mspd => {
                                mspd(&e.pose, &g.gt_pose, ctx.pattern(g), &model.points, cam)
                                    .unwrap_or(f64::INFINITY)
                            }
                        })
                        .collect()
                })
                .collect();
            let matched = thresholds
                .iter()
                .map(|&t| {
                    let theta = vec![absolute_threshold(metric, t, model, cam); gts.len()];
                    greedy_matches(&errors, &theta)
                })
                .collect();
            (key.2, gts.len(), matched)
        })
        .collect();

    let n_t = thresholds.len();
    let total: usize = per_group.iter().map(|g| g.1).sum();
    let mut pooled = vec![0usize; n_t];
    let mut per_obj: BTreeMap<u32, (usize, Vec<usize>)> = BTreeMap::new();
    for (obj, n, matched) in &per_group {
        let entry = per_obj.entry(*obj).or_insert_with(|| (0, vec![0; n_t]));
        entry.0 += n;
        for k in 0..n_t {
            pooled[k] += matched[k];
            entry.1[k] += matched[k];
        }
    }
    let ratio = |m: usize, n: usize| if n == 0 { 0.0 } else { m as f64 / n as f64 };
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let recall_per_threshold: Vec<f64> = pooled.iter().map(|&m| ratio(m, total)).collect();
    let per_object: BTreeMap<u32, f64> = per_obj
        .into_iter()
        .map(|(obj, (n, m))| {
            let r: Vec<f64> = m.iter().map(|&m| ratio(m, n)).collect();
            (obj, mean(&r))
        })
        .collect();
    let object_values: Vec<f64> = per_object.values().copied().collect();
    MetricReport {
        metric,
        thresholds: thresholds.to_vec(),
        recall: mean(&recall_per_threshold),
        recall_per_threshold,
        recall_object_mean: mean(&object_values),
        per_object,
    }
}

/// MSSD and MSPD recall with their mean as the ranking score.
pub fn single_pose_report(
    estimates: &[PoseEstimate],
    ctx: &EvalContext,
    metrics: &[ErrorMetric],
    mssd_fractions: &[f64],
    mspd_pixels: &[f64],
) -> ScoreReport {
    let reports: Vec<MetricReport> = metrics
        .iter()
        .map(|&m| {
            let t = match m {
                ErrorMetric::Mssd => mssd_fractions,
                ErrorMetric::Mspd => mspd_pixels,
            };
            single_pose_recall(estimates, ctx, m, t)
        })
        .collect();
    let score = if reports.is_empty() {
        0.0
    } else {
        reports.iter().map(|r| r.recall).sum::<f64>() / reports.len() as f64
    };
    let by_group = group_estimates(estimates, |e| (e.scene_id, e.im_id, e.obj_id));
    ScoreReport {
        metrics: reports,
        score,
        n_targets: ctx.n_targets(),
        n_estimates: estimates.len(),
        missing_targets: ctx
            .groups
            .keys()
            .filter(|k| !by_group.contains_key(k))
            .map(|k| [k.0, k.1, k.2])
            .collect(),
        unmatched_estimates: by_group
            .keys()
            .filter(|k| !ctx.groups.contains_key(k))
            .map(|k| [k.0, k.1, k.2])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistConfig {
    pub clamp: ClampMode,
    /// τ_d grid for MSD, as fractions of the object diameter.
    pub msd_fractions: Vec<f64>,
    /// τ_d grid for MPD, in `width/640` px units.
    pub mpd_pixels: Vec<f64>,
}

impl Default for DistConfig {
    fn default() -> Self {
        Self {
            clamp: ClampMode::Upper,
            msd_fractions: DEFAULT_MSSD_FRACTIONS.to_vec(),
            mpd_pixels: DEFAULT_MSPD_PIXELS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistReport {
    /// Scores ×100, averaged over targets and τ_d grids.
    pub p_mpd: f64,
    pub r_mpd: f64,
    pub p_msd: f64,
    pub r_msd: f64,
    pub p_mpd_per_threshold: Vec<f64>,
    pub r_mpd_per_threshold: Vec<f64>,
    pub p_msd_per_threshold: Vec<f64>,
    pub r_msd_per_threshold: Vec<f64>,
    pub config: DistConfig,
    pub n_targets: usize,
    pub n_estimates: usize,
    /// `[scene, image, object, inst_idx]` targets without a distribution.
    pub unmatched_targets: Vec<[u32; 4]>,
    /// `[scene, image, object]` distributions matching no target.
    pub unmatched_estimates: Vec<[u32; 3]>,
}

/// One scoring unit: a distribution against a ground-truth pose set,
/// counting for `weight` targets.
struct Unit<'a> {
    key: GroupKey,
    est: Option<&'a DistributionEstimate>,
    gt_poses: Vec<RigidTransform>,
    weight: usize,
}

/// Per-threshold sums of `P·weight` and `R·weight` for one unit and metric.
fn unit_scores(
    unit: &Unit,
    metric: DistanceMetric,
    grid: &[f64],
    ctx: &EvalContext,
    clamp: ClampMode,
) -> (Vec<f64>, Vec<f64>) {
    let Some(est) = unit.est else {
        return (vec![0.0; grid.len()], vec![0.0; grid.len()]);
    };
    let model = &ctx.models[&unit.key.2];
    let cam = ctx.camera(&unit.key);
    let m = DistanceMatrix::compute(metric, est, &unit.gt_poses, &model.points, cam);
    let w = unit.weight as f64;
    let abs = |t: f64| match metric {
        DistanceMetric::Msd => t * model.diameter,
        DistanceMetric::Mpd => t * cam.threshold_unit(),
    };
    let p = grid
        .iter()
        .map(|&t| precision_at(est, &m, abs(t)) * w)
        .collect();
    let r = grid
        .iter()
        .map(|&t| recall_at(est, &m, abs(t), clamp) * w)
        .collect();
    (p, r)
}

/// Distribution precision/recall over all targets. A distribution carrying
/// `inst_id` is scored against that instance; otherwise it is scored against
/// the union of the pose sets of all instances of its object in the image,
/// counting once per instance.
pub fn dist_score_report(
    estimates: &[DistributionEstimate],
    ctx: &EvalContext,
    config: &DistConfig,
) -> DistReport {
    let mut by_key: BTreeMap<GroupKey, Vec<&DistributionEstimate>> = BTreeMap::new();
    for e in estimates {
        by_key
            .entry((e.scene_id, e.im_id, e.obj_id))
            .or_default()
            .push(e);
    }
    let mut units = Vec::new();
    let mut unmatched_targets = Vec::new();
    for (key, gts) in &ctx.groups {
        let ests = by_key.get(key);
        let pooled = ests.and_then(|v| v.iter().find(|e| e.inst_id.is_none()).copied());
        if let Some(est) = pooled {
            units.push(Unit {
                key: *key,
                est: Some(est),
                gt_poses: gts.iter().flat_map(|g| g.poses()).collect(),
                weight: gts.len(),
            });
            continue;
        }
        for g in gts {
            let est = ests.and_then(|v| v.iter().find(|e| e.inst_id == Some(g.inst_idx)).copied());
            if est.is_none() {
                unmatched_targets.push([key.0, key.1, key.2, g.inst_idx]);
            }
            units.push(Unit {
                key: *key,
                est,
                gt_poses: g.poses(),
                weight: 1,
            });
        }
    }
    let unmatched_estimates = by_key
        .keys()
        .filter(|k| !ctx.groups.contains_key(k))
        .map(|k| [k.0, k.1, k.2])
        .collect();

    let total = ctx.n_targets() as f64;
    let score = |metric: DistanceMetric, grid: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let parts: Vec<(Vec<f64>, Vec<f64>)> = units
            .par_iter()
            .map(|u| unit_scores(u, metric, grid, ctx, config.clamp))
            .collect();
        let mut p = vec![0.0; grid.len()];
        let mut r = vec![0.0; grid.len()];
        for (up, ur) in parts {
            for k in 0..grid.len() {
                p[k] += up[k];
                r[k] += ur[k];
            }
        }
        let norm = |v: Vec<f64>| -> Vec<f64> {
            v.into_iter()
                .map(|x| if total > 0.0 { 100.0 * x / total } else { 0.0 })
                .collect()
        };
        (norm(p), norm(r))
    };
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (p_mpd_t, r_mpd_t) = score(DistanceMetric::Mpd, &config.mpd_pixels);
    let (p_msd_t, r_msd_t) = score(DistanceMetric::Msd, &config.msd_fractions);
    DistReport {
        p_mpd: mean(&p_mpd_t),
        r_mpd: mean(&r_mpd_t),
        p_msd: mean(&p_msd_t),
        r_msd: mean(&r_msd_t),
        p_mpd_per_threshold: p_mpd_t,
        r_mpd_per_threshold: r_mpd_t,
        p_msd_per_threshold: p_msd_t,
        r_msd_per_threshold: r_msd_t,
        config: config.clone(),
        n_targets: ctx.n_targets(),
        n_estimates: estimates.len(),
        unmatched_targets,
        unmatched_estimates,
    }
}
