//! Superposition of branch contributions into the semiclassical wave function
//! over a grid of real targets, with branch filtering.

use crate::bomca::{bomca_shoot, bomca_wavefunction_branch, classical_path_q_variant};
use crate::dynamics::{branch_search, shoot_for_target, Branch, BranchClass, SearchConfig};
use crate::error::{Error, Result};
use crate::ode::IntegratorOptions;
use crate::packet::SInit;
use crate::parallel::par_map;
use crate::potential::PotentialModel;
use crate::wkb::{evolve_wkb, wkb_wavefunction_branch};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wkb,
    Bomca,
    ClassicalQ,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Wkb => "wkb",
            Method::Bomca => "bomca",
            Method::ClassicalQ => "classical_q",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchContribution {
    pub branch_id: usize,
    pub x_start: Vec<Complex64>,
    pub contribution: Complex64,
    pub classification: BranchClass,
    pub caustic: bool,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: Vec<f64>,
    pub branches: Vec<BranchContribution>,
    /// Sum over branches classified contributing, exactly.
    pub total: Complex64,
    /// No contributing branch was found; the total is not meaningful.
    pub empty: bool,
    /// Per-target failures are reported here rather than aborting the grid.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub newton_iterations: usize,
    pub shots_attempted: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemiclassicalField {
    pub method: Method,
    pub order: usize,
    pub hbar: f64,
    pub t_end: f64,
    pub targets: Vec<Vec<f64>>,
    pub results: Vec<TargetResult>,
    pub stats: AssemblyStats,
}

impl SemiclassicalField {
    pub fn totals(&self) -> Vec<Complex64> {
        self.results.iter().map(|r| r.total).collect()
    }

    /// Indices of targets excluded from comparisons (empty or flagged).
    pub fn excluded_targets(&self) -> Vec<usize> {
        self.results
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.empty
                    || r.branches
                        .iter()
                        .all(|b| b.classification != BranchClass::Contributing)
                    || r.branches
                        .iter()
                        .any(|b| b.caustic && b.classification == BranchClass::Contributing)
            })
            .map(|(k, _)| k)
            .collect()
    }
}

/// Row-major product grid of real targets.
pub fn linspace_targets(start: &[f64], stop: &[f64], count: &[usize]) -> Vec<Vec<f64>> {
    let d = start.len();
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let n = count[i].max(1);
        axes.push(
            (0..n)
                .map(|k| {
                    if n == 1 {
                        start[i]
                    } else {
                        start[i] + (stop[i] - start[i]) * k as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        );
    }
    let mut out = vec![vec![]];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn embed(target: &[f64]) -> Vec<Complex64> {
    target.iter().map(|&t| Complex64::new(t, 0.0)).collect()
}

/// Classify branch contributions: magnitudes above cutoff * max|psi0| are
/// discarded, caustic-adjacent branches are excluded from the total.
pub fn filter_branches(branches: &mut [BranchContribution], cutoff: f64, max_psi0: f64) {
    for b in branches.iter_mut() {
        if b.classification == BranchClass::Duplicate {
            continue;
        }
        if b.caustic {
            b.classification = BranchClass::CausticAdjacent;
        } else if b.contribution.norm() > cutoff * max_psi0 {
            b.classification = BranchClass::DiscardedLarge;
        } else {
            b.classification = BranchClass::Contributing;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn branch_psi(
    branch: &Branch,
    target: &[Complex64],
    model: &PotentialModel,
    sinit: &SInit,
    method: Method,
    n: usize,
    t_end: f64,
    opts: IntegratorOptions,
    cfg: &SearchConfig,
) -> Result<(Complex64, Vec<Complex64>, usize)> {
    match method {
        Method::Wkb => {
            let uniform = sinit
                .masses()
                .iter()
                .all(|&m| (m - sinit.masses()[0]).abs() == 0.0);
            if !uniform && n == 1 {
                // leading order with diagonal masses: the classical wave
                // function straight from the trajectory record
                let rec = &branch.trajectory;
                let s0 = sinit.value(&branch.x_start) + rec.actions.last().unwrap();
                let psi = (Complex64::i() * s0 / sinit.hbar() - 0.5 * rec.final_log_det()).exp();
                return Ok((psi, branch.x_start.clone(), 0));
            }
            let state = evolve_wkb(branch, model, sinit, n, opts)?;
            Ok((
                wkb_wavefunction_branch(&state, sinit.hbar()),
                branch.x_start.clone(),
                0,
            ))
        }
        Method::Bomca => {
            let bb = bomca_shoot(
                target,
                &branch.x_start,
                model,
                sinit,
                n,
                t_end,
                opts,
                cfg.shoot_tol,
                cfg.max_newton,
                2,
            )?;
            Ok((
                bomca_wavefunction_branch(&bb.run.state, sinit.hbar()),
                bb.x_start,
                bb.newton_iterations,
            ))
        }
        Method::ClassicalQ => {
            let res = classical_path_q_variant(&branch.trajectory, model, sinit)?;
            Ok((res.psi, branch.x_start.clone(), 0))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_from_branches(
    target: &[f64],
    branches: Vec<Branch>,
    model: &PotentialModel,
    sinit: &SInit,
    method: Method,
    n: usize,
    t_end: f64,
    opts: IntegratorOptions,
    cfg: &SearchConfig,
) -> TargetResult {
    let target_c = embed(target);
    let mut contribs = Vec::new();
    let mut notes = Vec::new();
    for (id, branch) in branches.iter().enumerate() {
        match branch_psi(branch, &target_c, model, sinit, method, n, t_end, opts, cfg) {
            Ok((psi, x_start, extra_newton)) => contribs.push(BranchContribution {
                branch_id: id,
                x_start,
                contribution: psi,
                classification: BranchClass::Contributing,
                caustic: branch.trajectory.caustic_flag
                    || branch
                        .trajectory
                        .det_stability(branch.trajectory.samples() - 1)
                        .norm()
                        < cfg.caustic_threshold,
                newton_iterations: branch.newton_iterations + extra_newton,
            }),
            Err(e) => notes.push(format!("branch {id}: {e}")),
        }
    }
    filter_branches(&mut contribs, cfg.cutoff, 1.0);
    let total: Complex64 = contribs
        .iter()
        .filter(|b| b.classification == BranchClass::Contributing)
        .map(|b| b.contribution)
        .sum();
    let empty = !contribs
        .iter()
        .any(|b| b.classification == BranchClass::Contributing);
    TargetResult {
        target: target.to_vec(),
        branches: contribs,
        total,
        empty,
        note: if notes.is_empty() {
            None
        } else {
            Some(notes.join("; "))
        },
    }
}

/// Assemble the wave function at one real target: branch search, per-branch
/// hierarchy evolution, filtering, superposition.
#[allow(clippy::too_many_arguments)]
pub fn assemble_point(
    target: &[f64],
    model: &PotentialModel,
    sinit: &SInit,
    method: Method,
    n: usize,
    t_end: f64,
    cfg: &SearchConfig,
    opts: IntegratorOptions,
) -> (TargetResult, AssemblyStats) {
    let report = branch_search(&embed(target), model, sinit, t_end, opts, cfg);
    let stats = AssemblyStats {
        newton_iterations: report.branches.iter().map(|b| b.newton_iterations).sum(),
        shots_attempted: report.attempts,
    };
    (
        assemble_from_branches(target, report.branches, model, sinit, method, n, t_end, opts, cfg),
        stats,
    )
}

/// Assemble over a grid of real targets (cold start at every target).
/// Targets are processed in parallel; output order matches the input grid.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    targets: &[Vec<f64>],
    model: &PotentialModel,
    sinit: &SInit,
    method: Method,
    n: usize,
    t_end: f64,
    cfg: &SearchConfig,
    opts: IntegratorOptions,
) -> Result<SemiclassicalField> {
    validate_method(method, n, sinit.dim())?;
    let work: Vec<Vec<f64>> = targets.to_vec();
    let results = par_map(work, |t| {
        assemble_point(&t, model, sinit, method, n, t_end, cfg, opts)
    });
    let mut stats = AssemblyStats::default();
    let mut out = Vec::with_capacity(results.len());
    for (r, s) in results {
        stats.newton_iterations += s.newton_iterations;
        stats.shots_attempted += s.shots_attempted;
        out.push(r);
    }
    Ok(SemiclassicalField {
        method,
        order: n,
        hbar: sinit.hbar(),
        t_end,
        targets: targets.to_vec(),
        results: out,
        stats,
    })
}

pub fn validate_method(method: Method, n: usize, d: usize) -> Result<()> {
    let ok = match method {
        Method::Wkb => crate::wkb::supported(n, d),
        Method::Bomca => crate::bomca::supported(n, d),
        Method::ClassicalQ => d == 1,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::UnsupportedCombination(format!(
            "method {} order {n} in d={d}; supported: wkb n<=3 d=1 / n<=2 d<=3, bomca n=1 d<=3 / n=2 d<=2, classical_q d=1",
            method.name()
        )))
    }
}

/// Warm-started assembly along a path of targets: each target reuses the
/// previous target's branch starts as Newton guesses instead of running the
/// full lattice search. Falls back to a cold search when the warm start finds
/// nothing.
#[allow(clippy::too_many_arguments)]
pub fn branch_continuation(
    targets: &[Vec<f64>],
    model: &PotentialModel,
    sinit: &SInit,
    method: Method,
    n: usize,
    t_end: f64,
    cfg: &SearchConfig,
    opts: IntegratorOptions,
    prior: Option<&SemiclassicalField>,
) -> Result<SemiclassicalField> {
    validate_method(method, n, sinit.dim())?;
    let mut stats = AssemblyStats::default();
    let mut results: Vec<TargetResult> = Vec::with_capacity(targets.len());
    let mut carried: Vec<Vec<Complex64>> = prior
        .and_then(|f| f.results.first())
        .map(|r| r.branches.iter().map(|b| b.x_start.clone()).collect())
        .unwrap_or_default();

    for target in targets {
        let target_c = embed(target);
        let mut branches: Vec<Branch> = Vec::new();
        if !carried.is_empty() {
            for guess in &carried {
                stats.shots_attempted += 1;
                if let Ok(b) =
                    shoot_for_target(&target_c, guess, model, sinit, t_end, opts, cfg)
                {
                    let dup = branches.iter().any(|k| {
                        k.x_start
                            .iter()
                            .zip(&b.x_start)
                            .map(|(a, c)| (a - c).norm_sqr())
                            .sum::<f64>()
                            .sqrt()
                            < cfg.dedup_tol
                    });
                    if !dup {
                        stats.newton_iterations += b.newton_iterations;
                        branches.push(b);
                    }
                }
            }
        }
        if branches.is_empty() {
            let report = branch_search(&target_c, model, sinit, t_end, opts, cfg);
            stats.shots_attempted += report.attempts;
            stats.newton_iterations += report
                .branches
                .iter()
                .map(|b| b.newton_iterations)
                .sum::<usize>();
            branches = report.branches;
        }
        carried = branches.iter().map(|b| b.x_start.clone()).collect();
        results.push(assemble_from_branches(
            target, branches, model, sinit, method, n, t_end, opts, cfg,
        ));
    }

    Ok(SemiclassicalField {
        method,
        order: n,
        hbar: sinit.hbar(),
        t_end,
        targets: targets.to_vec(),
        results,
        stats,
    })
}
