//! Report builders. Every file's bytes depend only on the inputs, the
//! seed, and the flags, so identical runs are byte-identical.
//!
//! CSV floats use the 17-significant-digit exact format; JSON floats use
//! serde_json's shortest round-trip form. Degenerate slices (a pair with
//! no both-wrong samples, a zero-variance test, an unbalanceable
//! reference) are omitted from their report rather than erroring the run.

use std::collections::BTreeMap;

use percept_core::ingest::{fmt_float, ClassifierRef, EvalFrame};
use percept_core::metrics::{
    accuracy, agreement, balanced_subset, confusion, group_error_confusion, human_entropy,
    machine_confidence, matching_percentage, mean_time, sample_distribution_diff, stratify,
    BinSpec, ConfusionMatrix, DifficultyScore, ErrorFilter, MetricsError, Reference, SdNorm,
};
use percept_core::stats::{decide, diag_offdiag_test, ols_fit, Pooling, StatsError};
use percept_core::teaming::{
    best_pair_search, majority_vote, oracle_team, realistic_team, select_threshold, TeamMode,
    ThresholdSelection, TieRule,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::inputs::{InputFile, LoadedInputs};
use crate::output::{sha256_hex, OutputWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "lowercase")]
pub enum Which {
    Accuracy,
    Confusion,
    Difficulty,
    Matching,
    Stats,
    Teaming,
    All,
}

impl Which {
    pub fn as_str(self) -> &'static str {
        match self {
            Which::Accuracy => "accuracy",
            Which::Confusion => "confusion",
            Which::Difficulty => "difficulty",
            Which::Matching => "matching",
            Which::Stats => "stats",
            Which::Teaming => "teaming",
            Which::All => "all",
        }
    }
}

pub struct ReportFlags {
    pub error_filter: ErrorFilter,
    pub sd_norm: SdNorm,
    pub pooling: Pooling,
    pub tie: TieRule,
    /// Echo of the --tie argument for the manifest.
    pub tie_label: String,
    pub mode: TeamMode,
    pub eta: Option<f64>,
}

#[derive(Serialize)]
struct ClassifierInfo {
    id: String,
    kind: &'static str,
    soft: bool,
    has_times: bool,
}

#[derive(Serialize)]
pub struct ValidationReport<'a> {
    k: usize,
    n_samples: usize,
    files: &'a [InputFile],
    classifiers: Vec<ClassifierInfo>,
}

pub fn validation_report(inputs: &LoadedInputs) -> ValidationReport<'_> {
    let frame = &inputs.frame;
    let mut classifiers: Vec<ClassifierInfo> = frame
        .classifiers()
        .map(|c| ClassifierInfo {
            id: c.id().to_string(),
            kind: c.kind().as_str(),
            soft: c.is_soft(),
            has_times: c.times().is_some(),
        })
        .collect();
    classifiers.sort_by(|a, b| a.id.cmp(&b.id));
    ValidationReport {
        k: frame.k(),
        n_samples: frame.n_samples(),
        files: &inputs.files,
        classifiers,
    }
}

#[derive(Serialize)]
struct FlagsEcho {
    error_filter: &'static str,
    sd_norm: &'static str,
    pooling: &'static str,
    tie: String,
    mode: &'static str,
    eta: Option<f64>,
}

#[derive(Serialize)]
struct OutputEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_digest: String,
    seed: u64,
    alpha: f64,
    flags: FlagsEcho,
    inputs: &'a [InputFile],
    outputs: Vec<OutputEntry>,
}

pub fn run_report(
    cfg: &RunConfig,
    config_bytes: &[u8],
    which: Which,
    flags: &ReportFlags,
    seed: u64,
    alpha: f64,
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    let inputs = crate::inputs::load(cfg)?;
    let frame = &inputs.frame;

    if which == Which::All {
        out.write_json("validation.json", &validation_report(&inputs))?;
    }
    if matches!(which, Which::Accuracy | Which::All) {
        write_accuracy(frame, out)?;
    }
    if matches!(which, Which::Confusion | Which::All) {
        write_confusions(frame, flags.error_filter, out)?;
    }
    if matches!(which, Which::Difficulty | Which::All) {
        write_difficulty(frame, cfg, flags.sd_norm, out)?;
    }
    if matches!(which, Which::Matching | Which::All) {
        write_matching(frame, seed, out)?;
    }
    if matches!(which, Which::Stats | Which::All) {
        write_stats(frame, cfg, flags, alpha, &inputs.inputs_digest, out)?;
    }
    if matches!(which, Which::Teaming | Which::All) {
        write_teaming(frame, &inputs, cfg, flags, alpha, out)?;
    }

    let manifest = Manifest {
        tool: "percept",
        version: env!("CARGO_PKG_VERSION"),
        command: format!("report {}", which.as_str()),
        config_digest: sha256_hex(config_bytes),
        seed,
        alpha,
        flags: FlagsEcho {
            error_filter: flags.error_filter.as_str(),
            sd_norm: flags.sd_norm.as_str(),
            pooling: flags.pooling.as_str(),
            tie: flags.tie_label.clone(),
            mode: flags.mode.as_str(),
            eta: flags.eta,
        },
        inputs: &inputs.files,
        outputs: out
            .written()
            .iter()
            .map(|(name, sha256)| OutputEntry {
                name: name.clone(),
                sha256: sha256.clone(),
            })
            .collect(),
    };
    out.write_json("manifest.json", &manifest)
}

fn sorted_refs<'a>(it: impl Iterator<Item = ClassifierRef<'a>>) -> Vec<ClassifierRef<'a>> {
    let mut v: Vec<_> = it.collect();
    v.sort_by(|a, b| a.id().cmp(b.id()));
    v
}

fn write_accuracy(frame: &EvalFrame, out: &mut OutputWriter) -> Result<(), CliError> {
    let mut body = String::from("classifier_id,kind,accuracy\n");
    for c in sorted_refs(frame.classifiers()) {
        body.push_str(&format!(
            "{},{},{}\n",
            c.id(),
            c.kind().as_str(),
            fmt_float(accuracy(c))
        ));
    }
    out.write("accuracy.csv", body.as_bytes())
}

/// Normalized cells and the raw-count sidecar, class names on both axes.
fn confusion_csv(m: &ConfusionMatrix, names: &[String]) -> (String, String) {
    let mut header = String::from("row_label");
    for n in names {
        header.push(',');
        header.push_str(n);
    }
    header.push('\n');
    let mut cells = header.clone();
    let mut counts = header;
    for (p, row_name) in names.iter().enumerate() {
        cells.push_str(row_name);
        counts.push_str(row_name);
        for q in 0..m.k() {
            cells.push(',');
            cells.push_str(&fmt_float(m.cell(p, q)));
            counts.push(',');
            counts.push_str(&m.count(p, q).to_string());
        }
        cells.push('\n');
        counts.push('\n');
    }
    (cells, counts)
}

fn write_confusion_pair(
    stem: &str,
    m: &ConfusionMatrix,
    names: &[String],
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    let (cells, counts) = confusion_csv(m, names);
    out.write(&format!("{stem}.csv"), cells.as_bytes())?;
    out.write(&format!("{stem}_counts.csv"), counts.as_bytes())
}

fn write_confusions(
    frame: &EvalFrame,
    filter: ErrorFilter,
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    let names = frame.label_space().class_names();
    for c in sorted_refs(frame.classifiers()) {
        let m = confusion(c, Reference::Truth, None)?;
        write_confusion_pair(&format!("confusion_{}_vs_truth", c.id()), &m, names, out)?;
    }
    let machines = sorted_refs(frame.machines());
    let humans = sorted_refs(frame.humans());
    let groups: [(&str, &str, &[ClassifierRef], &[ClassifierRef]); 3] = [
        ("machines", "machines", &machines, &machines),
        ("humans", "humans", &humans, &humans),
        ("machines", "humans", &machines, &humans),
    ];
    for (a_name, b_name, ga, gb) in groups {
        if ga.is_empty() || gb.is_empty() {
            continue;
        }
        match group_error_confusion(ga, gb, filter) {
            Ok(m) => write_confusion_pair(
                &format!("confusion_{a_name}_vs_{b_name}"),
                &m,
                names,
                out,
            )?,
            // a one-member group has no pairs; a filter can select nothing
            Err(MetricsError::NoPairs | MetricsError::EmptySelection) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn difficulty_csv(frame: &EvalFrame, score: &DifficultyScore) -> String {
    let mut s = String::from("sample_id,value\n");
    for (id, v) in frame.sample_ids().iter().zip(score.values()) {
        s.push_str(&format!("{id},{}\n", fmt_float(*v)));
    }
    s
}

fn bin_override<'a>(cfg: &'a RunConfig, metric: &str) -> Option<&'a BinSpec> {
    cfg.bins.get(metric)
}

#[derive(Serialize)]
struct SdSummary {
    norm: &'static str,
    /// Machine id -> mean distribution difference.
    mean: BTreeMap<String, f64>,
}

fn write_difficulty(
    frame: &EvalFrame,
    cfg: &RunConfig,
    sd_norm: SdNorm,
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    let machines = sorted_refs(frame.machines());
    let humans = sorted_refs(frame.humans());
    let everyone = sorted_refs(frame.classifiers());

    if !machines.is_empty() {
        let score = agreement(&machines, None)?;
        out.write(
            "difficulty_machine_agreement.csv",
            difficulty_csv(frame, &score).as_bytes(),
        )?;
        let strat = stratify(&score, &machines, bin_override(cfg, "machine_agreement"))?;
        out.write_json("stratified_machine_agreement.json", &strat)?;
    }

    if !humans.is_empty() {
        let score = agreement(&humans, None)?;
        out.write(
            "difficulty_human_agreement.csv",
            difficulty_csv(frame, &score).as_bytes(),
        )?;
        let strat = stratify(&score, &humans, bin_override(cfg, "human_agreement"))?;
        out.write_json("stratified_human_agreement.json", &strat)?;

        let entropy = human_entropy(&humans)?;
        out.write(
            "difficulty_human_entropy.csv",
            difficulty_csv(frame, &entropy).as_bytes(),
        )?;
        let strat = stratify(&entropy, &everyone, bin_override(cfg, "human_entropy"))?;
        out.write_json("stratified_human_entropy.json", &strat)?;

        match mean_time(&humans) {
            Ok(time) => {
                out.write(
                    "difficulty_annotation_time.csv",
                    difficulty_csv(frame, &time).as_bytes(),
                )?;
                let strat = stratify(&time, &everyone, bin_override(cfg, "annotation_time"))?;
                out.write_json("stratified_annotation_time.json", &strat)?;
            }
            // untimed annotators in the mix: the metric is undefined
            Err(MetricsError::MissingTimes { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }

    let mut sd_means = BTreeMap::new();
    for m in &machines {
        if !m.is_soft() {
            continue;
        }
        let mc = machine_confidence(*m)?;
        out.write(
            &format!("difficulty_machine_confidence_{}.csv", m.id()),
            difficulty_csv(frame, &mc).as_bytes(),
        )?;
        let strat = stratify(&mc, &[*m], bin_override(cfg, "machine_confidence"))?;
        out.write_json(&format!("stratified_machine_confidence_{}.json", m.id()), &strat)?;

        if !humans.is_empty() {
            let sd = sample_distribution_diff(*m, &humans, sd_norm)?;
            let mut body = String::from("sample_id,value\n");
            for (id, v) in frame.sample_ids().iter().zip(&sd.values) {
                body.push_str(&format!("{id},{}\n", fmt_float(*v)));
            }
            out.write(&format!("difficulty_sd_{}.csv", m.id()), body.as_bytes())?;
            sd_means.insert(m.id().to_string(), sd.mean);
        }
    }
    if !sd_means.is_empty() {
        out.write_json(
            "sd_summary.json",
            &SdSummary {
                norm: sd_norm.as_str(),
                mean: sd_means,
            },
        )?;
    }
    Ok(())
}

fn write_matching(frame: &EvalFrame, seed: u64, out: &mut OutputWriter) -> Result<(), CliError> {
    let refs = sorted_refs(frame.classifiers());
    // one balanced subset per reference; all-correct/all-wrong references
    // cannot be balanced and contribute no rows
    let mut subsets: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for b in &refs {
        match balanced_subset(*b, seed) {
            Ok(s) => {
                subsets.insert(b.id(), s);
            }
            Err(MetricsError::CannotBalance { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut body = String::from("a,b,n_subset,value\n");
    for a in &refs {
        for b in &refs {
            if a.id() == b.id() {
                continue;
            }
            let Some(subset) = subsets.get(b.id()) else {
                continue;
            };
            let v = matching_percentage(*a, *b, subset)?;
            body.push_str(&format!(
                "{},{},{},{}\n",
                a.id(),
                b.id(),
                subset.len(),
                fmt_float(v)
            ));
        }
    }
    out.write("matching.csv", body.as_bytes())
}

#[derive(Serialize)]
struct TestRow {
    name: String,
    statistic: f64,
    df: usize,
    p: f64,
    alpha: f64,
    reject_null: bool,
    pooling: &'static str,
    inputs_digest: String,
}

#[derive(Serialize)]
struct StatsReport {
    alpha: f64,
    pooling: &'static str,
    tests: Vec<TestRow>,
}

/// Error confusion per ordered pair; pairs with no qualifying samples are
/// dropped from the family.
fn pair_error_family(
    group_a: &[ClassifierRef<'_>],
    group_b: &[ClassifierRef<'_>],
    filter: ErrorFilter,
) -> Result<Vec<ConfusionMatrix>, CliError> {
    let mut family = Vec::new();
    for a in group_a {
        for b in group_b {
            if a.id() == b.id() {
                continue;
            }
            match group_error_confusion(
                std::slice::from_ref(a),
                std::slice::from_ref(b),
                filter,
            ) {
                Ok(m) => family.push(m),
                Err(MetricsError::EmptySelection) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(family)
}

fn write_stats(
    frame: &EvalFrame,
    cfg: &RunConfig,
    flags: &ReportFlags,
    alpha: f64,
    inputs_digest: &str,
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    let machines = sorted_refs(frame.machines());
    let humans = sorted_refs(frame.humans());
    let pooling = flags.pooling;
    let mut tests = Vec::new();

    let push_t = |tests: &mut Vec<TestRow>, name: String, t: &percept_core::stats::TTestResult| {
        tests.push(TestRow {
            name,
            statistic: t.statistic,
            df: t.df,
            p: t.p_two_sided,
            alpha,
            reject_null: decide(t.p_two_sided, alpha).reject_null,
            pooling: pooling.as_str(),
            inputs_digest: inputs_digest.to_string(),
        });
    };

    let mm = pair_error_family(&machines, &machines, flags.error_filter)?;
    let hh = pair_error_family(&humans, &humans, flags.error_filter)?;
    let hm = pair_error_family(&humans, &machines, flags.error_filter)?;
    let families: [(&str, &[ConfusionMatrix], &[ConfusionMatrix]); 2] = [
        ("error_confusion_mm_vs_hh", &mm, &hh),
        ("error_confusion_mm_vs_hm", &mm, &hm),
    ];
    for (name, c1, c2) in families {
        if c1.is_empty() || c2.is_empty() {
            continue;
        }
        match diag_offdiag_test(c1, c2, pooling) {
            Ok(t) => {
                push_t(&mut tests, format!("{name}_diag"), &t.diag);
                push_t(&mut tests, format!("{name}_offdiag"), &t.offdiag);
            }
            // identical families have nothing to test
            Err(StatsError::ZeroVariance) => {}
            Err(e) => return Err(e.into()),
        }
    }

    let fits: [(&str, &str, &[ClassifierRef]); 2] = [
        ("machine_stratification", "machine_agreement", &machines),
        ("human_stratification", "human_agreement", &humans),
    ];
    for (prefix, metric_key, group) in fits {
        if group.is_empty() {
            continue;
        }
        let score = agreement(group, None)?;
        let strat = stratify(&score, group, bin_override(cfg, metric_key))?;
        let mut points = Vec::new();
        for (j, bin) in strat.bins.iter().enumerate() {
            let x = 0.5 * (bin.lo + bin.hi);
            for accs in strat.per_classifier.values() {
                if let Some(acc) = accs[j] {
                    points.push((x, acc));
                }
            }
        }
        let fit = match ols_fit(&points) {
            Ok(fit) => fit,
            // one occupied bin, or too few points: no line to fit
            Err(StatsError::SingularDesign | StatsError::TooFewPairs { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        // regression rows carry the coefficient as the statistic
        for (trailer, coef, p) in [
            ("slope", fit.slope, fit.slope_p),
            ("intercept", fit.intercept, fit.intercept_p),
        ] {
            if let Some(p) = p {
                tests.push(TestRow {
                    name: format!("{prefix}_{trailer}"),
                    statistic: coef,
                    df: fit.n - 2,
                    p,
                    alpha,
                    reject_null: decide(p, alpha).reject_null,
                    pooling: pooling.as_str(),
                    inputs_digest: inputs_digest.to_string(),
                });
            }
        }
    }

    out.write_json(
        "stats_report.json",
        &StatsReport {
            alpha,
            pooling: pooling.as_str(),
            tests,
        },
    )
}

#[derive(Serialize)]
struct CellRow {
    base: String,
    partner_pool: String,
    best_partner: String,
    base_acc: f64,
    partner_acc: f64,
    teamed_acc: f64,
    boost: f64,
    n_swapped: usize,
}

#[derive(Serialize)]
struct TeamingReport {
    mode: &'static str,
    eta: Option<f64>,
    grid: Option<Vec<f64>>,
    eta_star: Option<f64>,
    fallback: Option<bool>,
    tie_rule: String,
    selection_partner: Option<String>,
    /// Threshold searches by base group ("all" plus configured tags).
    selections: BTreeMap<String, ThresholdSelection>,
    cells: Vec<CellRow>,
}

fn write_teaming(
    frame: &EvalFrame,
    inputs: &LoadedInputs,
    cfg: &RunConfig,
    flags: &ReportFlags,
    alpha: f64,
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    // The aggre partner exists only when it can be voted and the id is free.
    let built_aggre = inputs.annotations.len() >= 2 && frame.classifier("aggre").is_none();
    let augmented;
    let frame: &EvalFrame = if built_aggre {
        let aggre = majority_vote(&inputs.annotations, frame.k(), flags.tie)?;
        augmented = frame
            .with_annotator(aggre)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        &augmented
    } else {
        frame
    };

    let machines = sorted_refs(frame.machines());
    let humans = sorted_refs(
        frame
            .humans()
            .filter(|h| !(built_aggre && h.id() == "aggre")),
    );
    let mut pools: Vec<(String, Vec<ClassifierRef>)> = Vec::new();
    if built_aggre {
        pools.push((
            "aggre".to_string(),
            vec![frame.classifier("aggre").expect("just added")],
        ));
    }
    if !humans.is_empty() {
        pools.push(("human".to_string(), humans.clone()));
    }
    if !machines.is_empty() {
        pools.push(("machine".to_string(), machines.clone()));
    }

    let bases: Vec<ClassifierRef> = match flags.mode {
        TeamMode::Oracle => sorted_refs(machines.iter().chain(humans.iter()).copied()),
        TeamMode::Swap => machines.iter().filter(|m| m.is_soft()).copied().collect(),
    };
    if bases.is_empty() {
        return Err(CliError::Compute(
            "teaming needs at least one eligible base (swap mode requires soft machines)".into(),
        ));
    }

    let mut selections = BTreeMap::new();
    let mut selection_partner = None;
    let (eta, eta_star, fallback) = match (flags.mode, flags.eta) {
        (TeamMode::Oracle, _) => (None, None, None),
        (TeamMode::Swap, Some(e)) => (Some(e), None, None),
        (TeamMode::Swap, None) => {
            let partner = if built_aggre {
                frame.classifier("aggre").expect("just added")
            } else {
                *humans.first().ok_or_else(|| {
                    CliError::Compute(
                        "threshold selection needs a human partner; pass --eta".into(),
                    )
                })?
            };
            selection_partner = Some(partner.id().to_string());
            if bases.len() < 2 {
                return Err(CliError::Compute(
                    "threshold selection needs at least two soft bases; pass --eta".into(),
                ));
            }
            let sel = select_threshold(&bases, partner, &cfg.eta_grid, alpha)?;
            let (star, fb) = (sel.eta_star, sel.fallback);
            selections.insert("all".to_string(), sel);
            for (tag, ids) in &inputs.groups {
                let tagged: Vec<ClassifierRef> = bases
                    .iter()
                    .filter(|b| ids.iter().any(|id| id == b.id()))
                    .copied()
                    .collect();
                if tagged.len() >= 2 {
                    selections.insert(
                        tag.clone(),
                        select_threshold(&tagged, partner, &cfg.eta_grid, alpha)?,
                    );
                }
            }
            (Some(star), Some(star), Some(fb))
        }
    };
    let grid = match flags.mode {
        TeamMode::Swap => Some(cfg.eta_grid.clone()),
        TeamMode::Oracle => None,
    };

    let mut matrix = String::from(
        "base,pool,partner,base_acc,partner_acc,teamed_acc,boost,n_swapped\n",
    );
    let mut cells = Vec::new();
    for base in &bases {
        let base_pools: Vec<(String, Vec<ClassifierRef>)> = pools
            .iter()
            .map(|(name, pool)| {
                let rest: Vec<ClassifierRef> = pool
                    .iter()
                    .filter(|c| c.id() != base.id())
                    .copied()
                    .collect();
                (name.clone(), rest)
            })
            .filter(|(_, pool)| !pool.is_empty())
            .collect();
        for (pool_name, pool) in &base_pools {
            for partner in pool {
                let cell = match flags.mode {
                    TeamMode::Oracle => oracle_team(*base, *partner)?.1,
                    TeamMode::Swap => {
                        realistic_team(*base, *partner, eta.expect("swap mode sets eta"))?.1
                    }
                };
                matrix.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    base.id(),
                    pool_name,
                    partner.id(),
                    fmt_float(cell.base_acc),
                    fmt_float(cell.partner_acc),
                    fmt_float(cell.teamed_acc),
                    fmt_float(cell.boost),
                    cell.n_swapped
                ));
            }
        }
        for row in best_pair_search(std::slice::from_ref(base), &base_pools, flags.mode, eta)? {
            cells.push(CellRow {
                base: row.base_id,
                partner_pool: row.pool,
                best_partner: row.partner_id,
                base_acc: row.cell.base_acc,
                partner_acc: row.cell.partner_acc,
                teamed_acc: row.cell.teamed_acc,
                boost: row.cell.boost,
                n_swapped: row.cell.n_swapped,
            });
        }
    }

    out.write("teaming_matrix.csv", matrix.as_bytes())?;
    out.write_json(
        "teaming_report.json",
        &TeamingReport {
            mode: flags.mode.as_str(),
            eta,
            grid,
            eta_star,
            fallback,
            tie_rule: flags.tie_label.clone(),
            selection_partner,
            selections,
            cells,
        },
    )
}
