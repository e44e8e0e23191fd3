//! `analyze`: load each subject's best-epoch checkpoint and produce the
//! full report tree — reward trajectories, representational dissimilarity
//! matrices, MDS embeddings, noise-trajectory maps, voxel and subject
//! clusters, and the reward regressions — as CSV files with SVG figures
//! next to them.
//!
//! Sections that cannot run (missing fits, too few subjects, numeric
//! trouble) are skipped with a recorded reason; the command then fails with
//! the partial-analysis exit code after writing everything else.

use crate::commands::load_dataset_required;
use crate::config::RunConfig;
use crate::csvout::Csv;
use crate::{checkpoints, textio, svg, LabError, Result};
use nerd_core::analysis::{
    align_trajectory_signs, cluster_subjects, cluster_voxels, extract_noise_trajectories,
    fit_reward_model, fit_reward_model_with_clusters, mds_embed, model_mean_reward,
    reward_trajectory, stepwise_rdm, subject_trajectory_rdm, trialpair_rdm, two_stage_pca,
    NoiseTrajectorySet, Rdm, SubjectTrajectory,
};
use nerd_core::diffusion::{make_start, run_episode, DenoisingEpisode};
use nerd_core::numerics::{agglomerative_dendrogram, paired_t_test, Mat, RngStream};
use nerd_core::policy::PolicyParams;
use nerd_core::training::Family;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct AnalyzeReport {
    /// Informational messages (cluster merges, clamped k, ...).
    pub notes: Vec<String>,
    /// Sections that could not run at all.
    pub skipped: Vec<String>,
    pub summary_path: PathBuf,
}

struct Unit {
    idx: usize,
    subject_id: String,
    family: Family,
    params: PolicyParams,
}

/// The stochastic family is rolled out by sampling its policy; the control
/// family is deterministic by construction and is rolled out as such.
fn stochastic_rollouts(family: Family) -> bool {
    matches!(family, Family::Nerd)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<AnalyzeReport> {
    let ds = load_dataset_required(out)?;
    let estar = read_estar(&out.join("fit").join("estar.csv"))?;
    let schedule = cfg.train_config(Family::Nerd, ds.reward_scale)?.schedule()?;
    let start_mode = cfg.start_mode()?;
    let linkage = cfg.linkage()?;
    let an = cfg.analysis.clone();
    let adir = out.join("analysis");

    let mut notes: Vec<String> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();

    // resolve which (subject, family) cells have a usable best checkpoint
    let mut units: Vec<Unit> = Vec::new();
    for (idx, subject) in ds.subjects.iter().enumerate() {
        for family in [Family::Nerd, Family::Control] {
            let key = (subject.id.clone(), family.label().to_string());
            let Some((e_star, _)) = estar.get(&key) else {
                skipped.push(format!(
                    "{}/{}: no fit result; run fit for this subject",
                    subject.id,
                    family.label()
                ));
                continue;
            };
            let dir = checkpoints::model_dir(out, &subject.id, family);
            let path = checkpoints::checkpoint_path(&dir, *e_star);
            match checkpoints::load_checkpoint(&path) {
                Ok(stored) => units.push(Unit {
                    idx,
                    subject_id: subject.id.clone(),
                    family,
                    params: stored.checkpoint.params,
                }),
                Err(e) => skipped.push(format!("{}/{}: {e}", subject.id, family.label())),
            }
        }
    }
    if units.is_empty() {
        return Err(LabError::Config(
            "nothing to analyze: no subject has a fitted checkpoint; run train and fit first"
                .to_string(),
        ));
    }

    let root = RngStream::new(cfg.seed).substream(0, "analysis");
    let section =
        |u: &Unit, tag: &str| root.substream(u.idx as u64, u.family.label()).substream(0, tag);

    // ---- reward trajectories ------------------------------------------
    let mut curve_csv = Csv::new(&["subject", "family", "step", "mean", "std"]);
    let mut family_curves: BTreeMap<&'static str, Vec<Vec<f64>>> = BTreeMap::new();
    for u in &units {
        let subject = &ds.subjects[u.idx];
        let reward = ds.training_reward(u.idx)?;
        let mut rng = section(u, "reward-curve");
        match reward_trajectory(
            &u.params,
            subject,
            &schedule,
            &reward,
            an.episodes,
            start_mode,
            stochastic_rollouts(u.family),
            &mut rng,
        ) {
            Ok((mean, std)) => {
                for (i, (m, s)) in mean.iter().zip(&std).enumerate() {
                    curve_csv.row(&[
                        u.subject_id.as_str(),
                        u.family.label(),
                        &i.to_string(),
                        &textio::fmt_f64(*m),
                        &textio::fmt_f64(*s),
                    ]);
                }
                family_curves.entry(u.family.label()).or_default().push(mean);
            }
            Err(e) => {
                skipped.push(format!("{}/{}: reward trajectory: {e}", u.subject_id, u.family.label()))
            }
        }
    }
    textio::atomic_write(&adir.join("reward_trajectories.csv"), &curve_csv.render())?;
    let curve_series: Vec<svg::Series> = family_curves
        .iter()
        .map(|(family, curves)| svg::Series {
            name: (*family).to_string(),
            points: mean_curve(curves),
        })
        .collect();
    textio::atomic_write(
        &adir.join("reward_trajectories.svg"),
        &svg::line_chart(
            "Mean reward over the denoising chain",
            "state index (0 = start)",
            "squashed reward",
            &curve_series,
        ),
    )?;

    // ---- per-unit state geometry: stepwise / trial-pair / MDS ----------
    let t_max = schedule.num_steps();
    let rep_step = ((0.9 * t_max as f64).round() as usize).min(t_max);
    for u in &units {
        let subject = &ds.subjects[u.idx];
        let reward = ds.training_reward(u.idx)?;
        let stochastic = stochastic_rollouts(u.family);
        let tag = format!("{}_{}", u.subject_id, u.family.label());

        let mut rng = section(u, "stepwise");
        let start = make_start(start_mode, &subject.trials[0].baseline_state, &schedule, &mut rng);
        match run_episode(&u.params, &start, &schedule, &reward, &mut rng, stochastic)
            .and_then(|ep| stepwise_rdm(&ep))
        {
            Ok(rdm) => {
                textio::atomic_write(&adir.join(format!("rdm_stepwise_{tag}.csv")), &rdm_csv(&rdm))?;
                textio::atomic_write(
                    &adir.join(format!("rdm_stepwise_{tag}.svg")),
                    &svg::heatmap(
                        &format!("State dissimilarity across steps ({tag})"),
                        rdm.labels(),
                        rdm.labels(),
                        rdm.dist(),
                    ),
                )?;
            }
            Err(e) => skipped.push(format!("{}/{}: stepwise rdm: {e}", u.subject_id, u.family.label())),
        }

        let n_tp = an.trialpair_trials.min(subject.trials.len());
        if n_tp < 2 {
            skipped.push(format!(
                "{}/{}: trial-pair rdm needs at least two trials",
                u.subject_id,
                u.family.label()
            ));
            continue;
        }
        let mut rng = section(u, "trialpair");
        let episodes: std::result::Result<Vec<DenoisingEpisode>, nerd_core::Error> = (0..n_tp)
            .map(|k| {
                let start =
                    make_start(start_mode, &subject.trials[k].baseline_state, &schedule, &mut rng);
                run_episode(&u.params, &start, &schedule, &reward, &mut rng, stochastic)
            })
            .collect();
        match episodes {
            Ok(eps) => {
                match trialpair_rdm(&eps, rep_step) {
                    Ok(rdm) => {
                        textio::atomic_write(
                            &adir.join(format!("rdm_trialpair_{tag}.csv")),
                            &rdm_csv(&rdm),
                        )?;
                        textio::atomic_write(
                            &adir.join(format!("rdm_trialpair_{tag}.svg")),
                            &svg::heatmap(
                                &format!("Trial dissimilarity at state {rep_step} ({tag})"),
                                rdm.labels(),
                                rdm.labels(),
                                rdm.dist(),
                            ),
                        )?;
                    }
                    Err(e) => skipped
                        .push(format!("{}/{}: trial-pair rdm: {e}", u.subject_id, u.family.label())),
                }
                let states: Vec<Vec<f64>> = eps.iter().map(|ep| ep.states[rep_step].clone()).collect();
                match mds_embed(&states) {
                    Ok(embedding) => {
                        let mut csv = Csv::new(&["trial", "dim1", "dim2"]);
                        let mut points = Vec::new();
                        for i in 0..embedding.rows() {
                            csv.row(&[
                                i.to_string(),
                                textio::fmt_f64(embedding[(i, 0)]),
                                textio::fmt_f64(embedding[(i, 1)]),
                            ]);
                            points.push((embedding[(i, 0)], embedding[(i, 1)]));
                        }
                        textio::atomic_write(&adir.join(format!("mds_trials_{tag}.csv")), &csv.render())?;
                        let series = vec![svg::Series { name: "trials".to_string(), points }];
                        textio::atomic_write(
                            &adir.join(format!("mds_trials_{tag}.svg")),
                            &svg::scatter(
                                &format!("MDS of trial states at step {rep_step} ({tag})"),
                                "dim 1",
                                "dim 2",
                                &series,
                            ),
                        )?;
                    }
                    Err(e) => {
                        skipped.push(format!("{}/{}: mds: {e}", u.subject_id, u.family.label()))
                    }
                }
            }
            Err(e) => skipped
                .push(format!("{}/{}: trial-pair rollouts: {e}", u.subject_id, u.family.label())),
        }
    }

    // ---- noise trajectories, voxel clusters, and subject paths ---------
    let mut trajsets: Vec<(usize, NoiseTrajectorySet)> = Vec::new();
    let mut voxel_csv = Csv::new(&["subject", "family", "voxel", "cluster"]);
    for (ui, u) in units.iter().enumerate() {
        let subject = &ds.subjects[u.idx];
        let reward = ds.training_reward(u.idx)?;
        let mut rng = section(u, "noise");
        let ts = match extract_noise_trajectories(
            &u.params,
            subject,
            u.family,
            &schedule,
            &reward,
            an.episodes,
            start_mode,
            stochastic_rollouts(u.family),
            &mut rng,
        ) {
            Ok(ts) => ts,
            Err(e) => {
                skipped.push(format!(
                    "{}/{}: noise trajectories: {e}",
                    u.subject_id,
                    u.family.label()
                ));
                continue;
            }
        };
        let tag = format!("{}_{}", u.subject_id, u.family.label());
        let v_labels: Vec<String> = (0..ts.mu.rows()).map(|i| format!("v{i}")).collect();
        let t_labels: Vec<String> = (0..ts.mu.cols()).map(|i| format!("step{i}")).collect();
        textio::atomic_write(
            &adir.join(format!("noise_mu_{tag}.csv")),
            &mat_csv(&v_labels, &t_labels, &ts.mu),
        )?;
        textio::atomic_write(
            &adir.join(format!("noise_sigma_{tag}.csv")),
            &mat_csv(&v_labels, &t_labels, &ts.sigma),
        )?;
        textio::atomic_write(
            &adir.join(format!("noise_mu_{tag}.svg")),
            &svg::heatmap(&format!("Normalized noise means ({tag})"), &v_labels, &t_labels, &ts.mu_star),
        )?;
        textio::atomic_write(
            &adir.join(format!("noise_sigma_{tag}.svg")),
            &svg::heatmap(
                &format!("Normalized noise spreads ({tag})"),
                &v_labels,
                &t_labels,
                &ts.sigma_star,
            ),
        )?;

        let k = an.voxel_k.min(ts.mu.rows());
        if k < an.voxel_k {
            notes.push(format!(
                "{}/{}: voxel k clamped to {k} (only {} voxels)",
                u.subject_id,
                u.family.label(),
                ts.mu.rows()
            ));
        }
        let mut krng = section(u, "voxel-k");
        match cluster_voxels(&ts, k, an.kmeans_restarts, &mut krng) {
            Ok(labels) => {
                for (voxel, cluster) in labels.iter().enumerate() {
                    voxel_csv.row(&[
                        u.subject_id.as_str(),
                        u.family.label(),
                        &voxel.to_string(),
                        &cluster.to_string(),
                    ]);
                }
            }
            Err(e) => skipped
                .push(format!("{}/{}: voxel clusters: {e}", u.subject_id, u.family.label())),
        }
        trajsets.push((ui, ts));
    }
    textio::atomic_write(&adir.join("voxel_clusters.csv"), &voxel_csv.render())?;

    // ---- per-family subject-level aggregates ---------------------------
    let mut traj_csv = Csv::new(&["subject", "family", "step", "pc1", "pc2", "pc3"]);
    let mut var_csv = Csv::new(&["subject", "family", "pc", "ratio"]);
    let mut cluster_csv = Csv::new(&["subject", "family", "cluster"]);
    let mut cluster_map: BTreeMap<(String, &'static str), usize> = BTreeMap::new();
    let mut cluster_sizes: BTreeMap<&'static str, Vec<usize>> = BTreeMap::new();

    for family in [Family::Nerd, Family::Control] {
        let mut trajs: Vec<SubjectTrajectory> = Vec::new();
        for (ui, ts) in &trajsets {
            if units[*ui].family != family {
                continue;
            }
            match two_stage_pca(ts) {
                Ok(t) => trajs.push(t),
                Err(e) => skipped.push(format!(
                    "{}/{}: trajectory pca: {e}",
                    units[*ui].subject_id,
                    family.label()
                )),
            }
        }
        if trajs.is_empty() {
            skipped.push(format!("{}: no subject trajectories", family.label()));
            continue;
        }
        if let Err(e) = align_trajectory_signs(&mut trajs) {
            skipped.push(format!("{}: sign alignment: {e}", family.label()));
            continue;
        }

        let mut path_series = Vec::new();
        for traj in &trajs {
            for step in 0..traj.pc_path.rows() {
                traj_csv.row(&[
                    traj.subject_id.as_str(),
                    family.label(),
                    &step.to_string(),
                    &textio::fmt_f64(traj.pc_path[(step, 0)]),
                    &textio::fmt_f64(traj.pc_path[(step, 1)]),
                    &textio::fmt_f64(traj.pc_path[(step, 2)]),
                ]);
            }
            for (pc, ratio) in traj.explained_variance_ratio.iter().enumerate() {
                var_csv.row(&[
                    traj.subject_id.as_str(),
                    family.label(),
                    &(pc + 1).to_string(),
                    &textio::fmt_f64(*ratio),
                ]);
            }
            path_series.push(svg::Series {
                name: traj.subject_id.clone(),
                points: (0..traj.pc_path.rows())
                    .map(|s| (traj.pc_path[(s, 0)], traj.pc_path[(s, 1)]))
                    .collect(),
            });
        }
        textio::atomic_write(
            &adir.join(format!("trajectories_{}.svg", family.label())),
            &svg::line_chart(
                &format!("Noise-trajectory paths, {} family", family.label()),
                "PC 1",
                "PC 2",
                &path_series,
            ),
        )?;

        if trajs.len() < 2 {
            skipped.push(format!(
                "{}: subject rdm needs at least two subjects",
                family.label()
            ));
            continue;
        }
        let rdm = match subject_trajectory_rdm(&trajs) {
            Ok(r) => r,
            Err(e) => {
                skipped.push(format!("{}: subject rdm: {e}", family.label()));
                continue;
            }
        };
        textio::atomic_write(
            &adir.join(format!("subject_rdm_{}.csv", family.label())),
            &rdm_csv(&rdm),
        )?;
        textio::atomic_write(
            &adir.join(format!("subject_rdm_{}.svg", family.label())),
            &svg::heatmap(
                &format!("Subject trajectory dissimilarity, {} family", family.label()),
                rdm.labels(),
                rdm.labels(),
                rdm.dist(),
            ),
        )?;
        match agglomerative_dendrogram(rdm.dist(), linkage) {
            Ok(dendro) => textio::atomic_write(
                &adir.join(format!("dendrogram_{}.svg", family.label())),
                &svg::dendrogram(
                    &format!("Subject clustering, {} family", family.label()),
                    rdm.labels(),
                    &dendro,
                ),
            )?,
            Err(e) => skipped.push(format!("{}: dendrogram: {e}", family.label())),
        }

        let k = an.subject_k.min(trajs.len());
        if k < an.subject_k {
            notes.push(format!(
                "{}: subject k clamped to {k} (only {} subjects)",
                family.label(),
                trajs.len()
            ));
        }
        match cluster_subjects(&rdm, k) {
            Ok(labels) => {
                let mut sizes = vec![0usize; labels.iter().max().map(|m| m + 1).unwrap_or(0)];
                for (traj, cluster) in trajs.iter().zip(&labels) {
                    cluster_csv.row(&[traj.subject_id.as_str(), family.label(), &cluster.to_string()]);
                    cluster_map.insert((traj.subject_id.clone(), family.label()), *cluster);
                    sizes[*cluster] += 1;
                }
                cluster_sizes.insert(family.label(), sizes);
            }
            Err(e) => skipped.push(format!("{}: subject clusters: {e}", family.label())),
        }
    }
    textio::atomic_write(&adir.join("subject_trajectories.csv"), &traj_csv.render())?;
    textio::atomic_write(&adir.join("pca_variance.csv"), &var_csv.render())?;
    textio::atomic_write(&adir.join("clusters.csv"), &cluster_csv.render())?;

    // ---- reward regressions --------------------------------------------
    let mut plain_csv = Csv::new(&["term", "beta", "p_value", "family"]);
    let mut full_csv = Csv::new(&["term", "beta", "p_value", "family"]);
    let mut scatter_series: Vec<svg::Series> = Vec::new();
    let mut r2: BTreeMap<&'static str, (f64, Option<f64>)> = BTreeMap::new();
    for family in [Family::Nerd, Family::Control] {
        let mut human = Vec::new();
        let mut model = Vec::new();
        let mut ids = Vec::new();
        for u in units.iter().filter(|u| u.family == family) {
            let subject = &ds.subjects[u.idx];
            let decoder = subject.decoder.clone();
            let raw = move |x: &[f64]| decoder.raw_reward(x);
            let mut rng = section(u, "model-reward");
            match model_mean_reward(
                &u.params,
                subject,
                &schedule,
                &raw,
                an.episodes,
                start_mode,
                stochastic_rollouts(family),
                &mut rng,
            ) {
                Ok(m) => {
                    human.push(subject.mean_achieved_reward());
                    model.push(m);
                    ids.push(u.subject_id.clone());
                }
                Err(e) => skipped
                    .push(format!("{}/{}: model reward: {e}", u.subject_id, family.label())),
            }
        }
        scatter_series.push(svg::Series {
            name: family.label().to_string(),
            points: model.iter().copied().zip(human.iter().copied()).collect(),
        });
        if human.len() < 3 {
            skipped.push(format!(
                "{}: reward regression needs at least three subjects",
                family.label()
            ));
            continue;
        }
        match fit_reward_model(&human, &model) {
            Ok(fit) => {
                for ((name, beta), p) in
                    fit.design_column_names.iter().zip(&fit.coefficients).zip(&fit.p_values)
                {
                    plain_csv.row(&[
                        name.as_str(),
                        &textio::fmt_f64(*beta),
                        &textio::fmt_f64(*p),
                        family.label(),
                    ]);
                }
                r2.insert(family.label(), (fit.r_squared, None));
            }
            Err(e) => {
                skipped.push(format!("{}: reward regression: {e}", family.label()));
                continue;
            }
        }
        let clusters: Option<Vec<usize>> = ids
            .iter()
            .map(|id| cluster_map.get(&(id.clone(), family.label())).copied())
            .collect();
        match clusters {
            Some(clusters) => match fit_reward_model_with_clusters(&human, &model, &clusters) {
                Ok(cf) => {
                    for w in &cf.warnings {
                        notes.push(format!("{}: {w}", family.label()));
                    }
                    for ((name, beta), p) in cf
                        .fit
                        .design_column_names
                        .iter()
                        .zip(&cf.fit.coefficients)
                        .zip(&cf.fit.p_values)
                    {
                        full_csv.row(&[
                            name.as_str(),
                            &textio::fmt_f64(*beta),
                            &textio::fmt_f64(*p),
                            family.label(),
                        ]);
                    }
                    if let Some(entry) = r2.get_mut(family.label()) {
                        entry.1 = Some(cf.fit.r_squared);
                    }
                }
                Err(e) => skipped.push(format!("{}: clustered regression: {e}", family.label())),
            },
            None => skipped.push(format!(
                "{}: clustered regression skipped (no subject clusters)",
                family.label()
            )),
        }
    }
    textio::atomic_write(&adir.join("regression_plain.csv"), &plain_csv.render())?;
    textio::atomic_write(&adir.join("regression_summary.csv"), &full_csv.render())?;
    textio::atomic_write(
        &adir.join("model_vs_human.svg"),
        &svg::scatter(
            "Model-predicted vs achieved reward",
            "model mean reward (raw)",
            "subject mean achieved reward (raw)",
            &scatter_series,
        ),
    )?;

    // ---- narrative summary ----------------------------------------------
    let summary_path = adir.join("summary.md");
    let summary = render_summary(&ds, &estar, &r2, &cluster_sizes, &notes, &skipped);
    textio::atomic_write(&summary_path, &summary)?;

    if skipped.is_empty() {
        Ok(AnalyzeReport { notes, skipped, summary_path })
    } else {
        Err(LabError::Partial(skipped))
    }
}

type EstarTable = BTreeMap<(String, String), (usize, f64)>;

fn read_estar(path: &Path) -> Result<EstarTable> {
    if !path.exists() {
        return Err(LabError::Config(format!(
            "no fit results at {}; run fit first",
            path.display()
        )));
    }
    let content = textio::read_to_string(path)?;
    let mut rows = BTreeMap::new();
    for (lineno, line) in content.lines().enumerate().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let parse_err = |msg: String| LabError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        };
        if cells.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", cells.len())));
        }
        let e_star = cells[2].parse::<usize>().map_err(|e| parse_err(format!("bad e_star: {e}")))?;
        let min_nll =
            cells[3].parse::<f64>().map_err(|e| parse_err(format!("bad min_nll: {e}")))?;
        rows.insert((cells[0].to_string(), cells[1].to_string()), (e_star, min_nll));
    }
    Ok(rows)
}

/// Square dissimilarity matrix as CSV: a label column, then one column per
/// label.
fn rdm_csv(rdm: &Rdm) -> String {
    let mut header: Vec<&str> = vec!["label"];
    header.extend(rdm.labels().iter().map(|s| s.as_str()));
    let mut csv = Csv::new(&header);
    for (i, label) in rdm.labels().iter().enumerate() {
        let mut row = vec![label.clone()];
        for j in 0..rdm.len() {
            row.push(textio::fmt_f64(rdm.dist()[(i, j)]));
        }
        csv.row(&row);
    }
    csv.render()
}

fn mat_csv(row_labels: &[String], col_labels: &[String], m: &Mat) -> String {
    let mut header: Vec<&str> = vec!["label"];
    header.extend(col_labels.iter().map(|s| s.as_str()));
    let mut csv = Csv::new(&header);
    for i in 0..m.rows() {
        let mut row = vec![row_labels[i].clone()];
        for j in 0..m.cols() {
            row.push(textio::fmt_f64(m[(i, j)]));
        }
        csv.row(&row);
    }
    csv.render()
}

/// Pointwise mean of equally long curves, as (step, value) pairs.
fn mean_curve(curves: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let Some(len) = curves.iter().map(Vec::len).min() else {
        return Vec::new();
    };
    (0..len)
        .map(|i| {
            let sum: f64 = curves.iter().map(|c| c[i]).sum();
            (i as f64, sum / curves.len() as f64)
        })
        .collect()
}

fn render_summary(
    ds: &nerd_core::envsim::Dataset,
    estar: &EstarTable,
    r2: &BTreeMap<&'static str, (f64, Option<f64>)>,
    cluster_sizes: &BTreeMap<&'static str, Vec<usize>>,
    notes: &[String],
    skipped: &[String],
) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "# Analysis summary\n");
    let trials = ds.subjects.first().map(|su| su.trials.len()).unwrap_or(0);
    let _ = writeln!(
        s,
        "Cohort: {} subjects, {} voxels, {} trials per subject; reward squash scale {:.6}.\n",
        ds.subjects.len(),
        ds.v,
        trials,
        ds.reward_scale
    );

    let _ = writeln!(s, "## Model fit\n");
    let _ = writeln!(s, "| family | subjects | mean best epoch | mean best NLL |");
    let _ = writeln!(s, "|---|---|---|---|");
    let mut nerd_nll = Vec::new();
    let mut control_nll = Vec::new();
    for family in ["control", "nerd"] {
        let rows: Vec<&(usize, f64)> =
            estar.iter().filter(|((_, f), _)| f == family).map(|(_, v)| v).collect();
        if rows.is_empty() {
            continue;
        }
        let mean_e = rows.iter().map(|(e, _)| *e as f64).sum::<f64>() / rows.len() as f64;
        let mean_nll = rows.iter().map(|(_, n)| *n).sum::<f64>() / rows.len() as f64;
        let _ = writeln!(s, "| {family} | {} | {mean_e:.1} | {mean_nll:.4} |", rows.len());
    }
    for ((subject, family), (_, nll)) in estar {
        if family == "nerd" {
            if let Some((_, c)) = estar.get(&(subject.clone(), "control".to_string())) {
                nerd_nll.push(*nll);
                control_nll.push(*c);
            }
        }
    }
    if nerd_nll.len() >= 2 {
        if let Ok((t, p)) = paired_t_test(&nerd_nll, &control_nll) {
            let md = nerd_nll.iter().zip(&control_nll).map(|(a, b)| a - b).sum::<f64>()
                / nerd_nll.len() as f64;
            let _ = writeln!(
                s,
                "\nPaired t-test on best NLL (nerd minus control, n = {}): mean diff {md:.4}, t = {t:.3}, p = {p:.4}.",
                nerd_nll.len()
            );
        }
    }

    let _ = writeln!(s, "\n## Reward regressions\n");
    let _ = writeln!(s, "| family | R^2 (reward only) | R^2 (with clusters) |");
    let _ = writeln!(s, "|---|---|---|");
    for (family, (plain, clustered)) in r2 {
        let c = clustered.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".to_string());
        let _ = writeln!(s, "| {family} | {plain:.4} | {c} |");
    }
    if let (Some((rn, _)), Some((rc, _))) = (r2.get("nerd"), r2.get("control")) {
        let (better, worse, hi, lo) = if rn >= rc {
            ("nerd", "control", rn, rc)
        } else {
            ("control", "nerd", rc, rn)
        };
        let _ = writeln!(
            s,
            "\nR-squared ordering: the {better} family explains achieved reward better than the {worse} family ({hi:.4} vs {lo:.4})."
        );
    }
    for (family, (plain, clustered)) in r2 {
        if let Some(c) = clustered {
            let _ = writeln!(
                s,
                "Adding subject-cluster terms moves the {family} R^2 from {plain:.4} to {c:.4}."
            );
        }
    }

    if !cluster_sizes.is_empty() {
        let _ = writeln!(s, "\n## Subject clusters\n");
        for (family, sizes) in cluster_sizes {
            let _ = writeln!(s, "- {family}: cluster sizes {sizes:?}");
        }
    }

    if !notes.is_empty() {
        let _ = writeln!(s, "\n## Notes\n");
        for n in notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    if !skipped.is_empty() {
        let _ = writeln!(s, "\n## Skipped\n");
        for k in skipped {
            let _ = writeln!(s, "- {k}");
        }
    }
    s
}
