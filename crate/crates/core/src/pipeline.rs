//! End-to-end analysis pipeline: parse -> extract -> verdict -> exponents,
//! with optional Knapp, testing, and vector-field sections. The CLI is a
//! thin wrapper around [`analyze`] and the partial runners.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagram::{
    scaling_exponent, scaling_point_f64, stability_margin, verdict, DecayReport, VerdictConfig,
    VerdictStatus, Witness,
};
use crate::error::{Error, Result};
use crate::harness::{
    knapp_sweep, testing_sup_search, EtaSpec, FilterConfig, SampleMethod, TestingSupReport,
};
use crate::multilinear::VectorList;
use crate::qcalc::{BasisTriple, TrilinearForm};
use crate::radonmap::{
    best_exponents, coarea_identity_check, extract_q, hormander_check, model_map, parse_map,
    rational_f64, BasePoint, ExponentSet, PolynomialMap,
};
use crate::report::{
    AnalysisConfig, EnsembleReport, ExponentsReport, HarnessReport, InputEcho, Report,
    TensorReport, VerdictReport, WitnessReport, SCHEMA_VERSION,
};
use crate::vfields::{corpus_probes, verify_identities, VfPipeline, VfReport};

/// Exit-code contract: 0 nondegenerate, 2 degenerate, 3 inconclusive,
/// 1 error (the error path never constructs a report).
pub fn exit_code_for(status: &VerdictStatus) -> i32 {
    match status {
        VerdictStatus::Nondegenerate => 0,
        VerdictStatus::Degenerate => 2,
        VerdictStatus::Inconclusive => 3,
    }
}

pub struct AnalysisOutcome {
    pub report: Report,
    pub exit_code: i32,
}

fn vectorlist_rows(l: &VectorList) -> Vec<Vec<f64>> {
    l.vectors().iter().map(|v| v.iter().copied().collect()).collect()
}

fn witness_report(w: &Witness) -> WitnessReport {
    WitnessReport {
        bases_u: vectorlist_rows(&w.bases.u),
        bases_v: vectorlist_rows(&w.bases.v),
        bases_w: vectorlist_rows(&w.bases.w),
        d1_eigenvalues: w.d1_eigs.clone(),
        d2_eigenvalues: w.d2_eigs.clone(),
        d3_eigenvalues: w.d3_eigs.clone(),
        traces: w.traces(),
    }
}

fn exponents_report(e: &ExponentSet) -> ExponentsReport {
    ExponentsReport {
        p: e.p.to_string(),
        q: e.q.to_string(),
        p_dual: e.p_dual.to_string(),
        q_dual: e.q_dual.to_string(),
        p_f64: rational_f64(e.p),
        q_f64: rational_f64(e.q),
        p_dual_f64: rational_f64(e.p_dual),
        q_dual_f64: rational_f64(e.q_dual),
    }
}

/// Knapp tau grid: integers 0..=tau_max.
fn knapp_taus(tau_max: f64) -> Vec<f64> {
    let m = tau_max.max(4.0).floor() as usize;
    (0..=m).map(|i| i as f64).collect()
}

/// The witness driving the corroboration harness: the certified one for
/// degenerate verdicts, the least-decaying admissible direction otherwise.
fn harness_witness(v: &crate::diagram::Verdict) -> Option<(Witness, Option<&DecayReport>)> {
    match &v.witness {
        Some((w, d)) => Some((w.clone(), Some(d))),
        None => v.least_decaying.as_ref().map(|w| (w.clone(), None)),
    }
}

/// Full analysis of a polynomial map at a base point.
pub fn analyze(input_text: &str, point: Option<BasePoint>, cfg: &AnalysisConfig) -> Result<AnalysisOutcome> {
    let map = parse_map(input_text)?;
    let base = point.unwrap_or_else(|| BasePoint::origin(map.n(), map.d1()));
    if base.x.len() != map.n() || base.t.len() != map.d1() {
        return Err(Error::DimensionMismatch(format!(
            "base point sized {}+{} does not fit a map with n={} d1={}",
            base.x.len(),
            base.t.len(),
            map.n(),
            map.d1()
        )));
    }

    // Rank precondition and tensor extraction.
    let (q, kernel) = extract_q(&map, &base)?;
    let exps = best_exponents(map.n(), map.k(), map.d1())?;

    let vcfg = VerdictConfig {
        seed: cfg.seed,
        n_samples: cfg.samples,
        polish_iters: cfg.optimizer_iters,
        eps_coef: cfg.eps_coef,
        trace_target: cfg.trace_target,
        ..VerdictConfig::default()
    };
    let v = verdict(&q, &vcfg)?;
    let exit_code = exit_code_for(&v.status);

    let hormander = hormander_check(&map, &base)?;

    // Coarea identity at seeded sample points around the base point.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0a5ea);
    let coarea_samples: Vec<BasePoint> = (0..32)
        .map(|_| BasePoint {
            x: base
                .x
                .iter()
                .map(|v| v + 0.5 * crate::multilinear::gaussian(&mut rng))
                .collect(),
            t: base
                .t
                .iter()
                .map(|v| v + 0.5 * crate::multilinear::gaussian(&mut rng))
                .collect(),
        })
        .collect();
    let coarea_residual = coarea_identity_check(&map, &coarea_samples);

    let (d1, k, d) = q.dims();
    let s = scaling_exponent(d1, k, d);

    let mut harness = None;
    if cfg.with_harness {
        if let Some((witness, decay)) = harness_witness(&v) {
            let mm = model_map(&map, &base)?;
            let taus = knapp_taus(cfg.tau_max);
            let series = knapp_sweep(
                &mm.theta,
                &witness,
                &taus,
                &exps,
                &FilterConfig {
                    seed: cfg.seed ^ 0x5eed,
                    ..FilterConfig::default()
                },
                SampleMethod::MonteCarlo,
                cfg.mc_samples,
                cfg.seed ^ 0x6a9b,
            )?;
            let predicted = decay.map(|dr| -dr.slope / rational_f64(exps.p));
            harness = Some(HarnessReport {
                series,
                predicted_slope: predicted,
                samples_per_tau: cfg.mc_samples,
                method: "montecarlo".into(),
            });
        }
    }

    let mut testing = None;
    if cfg.with_testing {
        if let Some((witness, _)) = harness_witness(&v) {
            testing = Some(run_testing(&map, &base, &witness, &exps, cfg)?);
        }
    }

    let mut vfields = None;
    if cfg.with_vfields {
        vfields = Some(run_vfields_corpus()?);
    }

    let stability = if v.status == VerdictStatus::Nondegenerate {
        Some(stability_margin(
            &q,
            &v.status,
            0.01,
            cfg.seed ^ 0x57ab,
            4,
            256,
        )?)
    } else {
        None
    };

    let report = Report {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        input: InputEcho {
            text: crate::radonmap::to_text(&map),
            n: map.n(),
            d1: map.d1(),
            k: map.k(),
            d: map.d(),
            degree: map.degree(),
            base_point_x: base.x.clone(),
            base_point_t: base.t.clone(),
        },
        exponents: exponents_report(&exps),
        tensor: TensorReport {
            d1,
            k,
            d,
            coeffs: q.coeffs().to_vec(),
            norm: q.norm(),
            kernel_basis: vectorlist_rows(&kernel),
        },
        verdict: VerdictReport {
            status: v.status.clone(),
            exit_code,
            scaling_exponent: s.to_string(),
            scaling_point: scaling_point_f64(d1, k, d, s),
            certificate: v
                .certificate
                .iter()
                .map(|e| EnsembleReport {
                    bases_u: vectorlist_rows(&e.bases.u),
                    bases_v: vectorlist_rows(&e.bases.v),
                    bases_w: vectorlist_rows(&e.bases.w),
                    points: e
                        .points
                        .iter()
                        .map(|p| {
                            p.alpha
                                .iter()
                                .chain(&p.beta)
                                .chain(&p.gamma)
                                .copied()
                                .collect()
                        })
                        .collect(),
                    weights: e.weights.clone(),
                    coefficient_margins: e.coefficient_margins.clone(),
                    depth: e.depth,
                    weight_tolerance: 1e-9,
                })
                .collect(),
            witness: v.witness.as_ref().map(|(w, _)| witness_report(w)),
            decay: v.witness.as_ref().map(|(_, d)| d.clone()),
            least_decaying: v.least_decaying.as_ref().map(witness_report),
            stats: v.stats.clone(),
        },
        hormander,
        coarea_residual,
        harness,
        testing,
        vfields,
        stability,
    };
    Ok(AnalysisOutcome { report, exit_code })
}

fn run_testing(
    map: &PolynomialMap,
    base: &BasePoint,
    witness: &Witness,
    exps: &ExponentSet,
    cfg: &AnalysisConfig,
) -> Result<TestingSupReport> {
    let mm = model_map(map, base)?;
    let n = map.n();
    let d = map.d();
    // Kernel and row-space frames from the model rotation columns.
    let kernel = VectorList::new(
        n,
        (0..d).map(|i| mm.rotation.column(i).into_owned()).collect(),
    )?;
    let rowspace = VectorList::new(
        n,
        (d..n).map(|i| mm.rotation.column(i).into_owned()).collect(),
    )?;
    let taus: Vec<f64> = (0..=8).map(|i| i as f64).collect();
    testing_sup_search(
        map,
        base,
        &kernel,
        &rowspace,
        witness,
        rational_f64(exps.p_dual),
        &EtaSpec::default(),
        &taus,
        24,
        cfg.seed ^ 0x7e57,
        16,
    )
}

/// Runs the vector-field engine on its reference corpus and verifies the
/// construction identities.
pub fn run_vfields_corpus() -> Result<VfReport> {
    let mut pipe = VfPipeline::new(crate::vfields::corpus_map(), 2, corpus_probes(8))?;
    pipe.iterate_generation()?;
    pipe.iterate_generation()?;
    verify_identities(&pipe, &corpus_probes(10))
}

/// Partial run: Knapp harness only (still parses and extracts, since the
/// sweep needs the tensor and a witness).
pub fn run_knapp_only(
    input_text: &str,
    point: Option<BasePoint>,
    cfg: &AnalysisConfig,
) -> Result<AnalysisOutcome> {
    let mut cfg = cfg.clone();
    cfg.with_harness = true;
    cfg.with_testing = false;
    cfg.with_vfields = false;
    analyze(input_text, point, &cfg)
}

pub fn run_testing_only(
    input_text: &str,
    point: Option<BasePoint>,
    cfg: &AnalysisConfig,
) -> Result<AnalysisOutcome> {
    let mut cfg = cfg.clone();
    cfg.with_harness = false;
    cfg.with_testing = true;
    cfg.with_vfields = false;
    analyze(input_text, point, &cfg)
}

/// Parses "x1,..,xn;t1,..,td1" into a base point.
pub fn parse_point(s: &str) -> Result<BasePoint> {
    let (xs, ts) = s
        .split_once(';')
        .ok_or_else(|| Error::Parse("point format is x1,..,xn;t1,..,td1".into()))?;
    let parse_list = |part: &str| -> Result<Vec<f64>> {
        part.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad coordinate `{v}`: {e}")))
            })
            .collect()
    };
    Ok(BasePoint {
        x: parse_list(xs)?,
        t: parse_list(ts)?,
    })
}

/// Witness assembled from report data; lets partial subcommands rerun
/// harness pieces from a stored verdict.
pub fn witness_from_report(w: &WitnessReport) -> Result<Witness> {
    let mk = |rows: &Vec<Vec<f64>>| -> Result<VectorList> {
        let dim = rows.len();
        VectorList::new(
            dim,
            rows.iter()
                .map(|r| DVector::from_row_slice(r))
                .collect(),
        )
    };
    let bases = BasisTriple::new(mk(&w.bases_u)?, mk(&w.bases_v)?, mk(&w.bases_w)?)?;
    Ok(Witness {
        bases,
        d1_eigs: w.d1_eigenvalues.clone(),
        d2_eigs: w.d2_eigenvalues.clone(),
        d3_eigs: w.d3_eigenvalues.clone(),
    })
}

/// Convenience for tests: extract the model tensor of a map at a point.
pub fn model_tensor(input_text: &str, point: Option<BasePoint>) -> Result<TrilinearForm> {
    let map = parse_map(input_text)?;
    let base = point.unwrap_or_else(|| BasePoint::origin(map.n(), map.d1()));
    Ok(extract_q(&map, &base)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radonmap::{example_degenerate, example_nondegenerate, to_text};

    #[test]
    fn analyze_degenerate_example() {
        let text = to_text(&example_degenerate());
        let cfg = AnalysisConfig {
            samples: 60,
            ..AnalysisConfig::default()
        };
        let out = analyze(&text, None, &cfg).unwrap();
        assert_eq!(out.exit_code, 2);
        assert_eq!(out.report.verdict.status, VerdictStatus::Degenerate);
        assert!(out.report.verdict.witness.is_some());
        assert!(out.report.hormander.spans);
        assert!(out.report.coarea_residual < 1e-9);
        assert_eq!(out.report.exponents.p, "5/3");
        assert_eq!(out.report.exponents.q, "5");
    }

    #[test]
    fn analyze_nondegenerate_example() {
        let text = to_text(&example_nondegenerate());
        let cfg = AnalysisConfig {
            samples: 60,
            ..AnalysisConfig::default()
        };
        let out = analyze(&text, None, &cfg).unwrap();
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.report.verdict.status, VerdictStatus::Nondegenerate);
        assert!(!out.report.verdict.certificate.is_empty());
        assert_eq!(out.report.exponents.p, "4/3");
        assert_eq!(out.report.exponents.q, "4");
        assert!(out.report.stability.is_some());
    }

    #[test]
    fn analyze_zero_map_fails_rank() {
        let text = "dims: n=2 d1=1\n0\n";
        let cfg = AnalysisConfig::default();
        assert!(matches!(
            analyze(text, None, &cfg),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn report_round_trips_through_schema() {
        let text = to_text(&example_degenerate());
        let cfg = AnalysisConfig {
            samples: 40,
            ..AnalysisConfig::default()
        };
        let out = analyze(&text, None, &cfg).unwrap();
        let json = out.report.to_json();
        let back = Report::from_json(&json).unwrap();
        let json2 = back.to_json();
        assert_eq!(json, json2, "parse -> emit must be a fixpoint");
    }

    #[test]
    fn analyze_is_deterministic() {
        let text = to_text(&example_degenerate());
        let cfg = AnalysisConfig {
            samples: 40,
            ..AnalysisConfig::default()
        };
        let a = analyze(&text, None, &cfg).unwrap().report.to_json();
        let b = analyze(&text, None, &cfg).unwrap().report.to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn exit_code_contract() {
        assert_eq!(exit_code_for(&VerdictStatus::Nondegenerate), 0);
        assert_eq!(exit_code_for(&VerdictStatus::Degenerate), 2);
        assert_eq!(exit_code_for(&VerdictStatus::Inconclusive), 3);
    }

    #[test]
    fn point_parsing() {
        let p = parse_point("0.5,1,-2;0.25").unwrap();
        assert_eq!(p.x, vec![0.5, 1.0, -2.0]);
        assert_eq!(p.t, vec![0.25]);
        assert!(parse_point("1,2,3").is_err());
    }

    #[test]
    fn vfields_corpus_report() {
        let r = run_vfields_corpus().unwrap();
        assert!(r.kronecker_exact.iter().all(|&b| b));
        assert!(r.det_identity_exact.iter().all(|&b| b));
        assert_eq!(r.closure_sizes, vec![3, 9, 27]);
    }
}
