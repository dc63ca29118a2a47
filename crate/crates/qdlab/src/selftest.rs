//! Fast, named invariant suites for smoke-testing a build on the machine
//! it runs on: each check recomputes a structural identity on freshly
//! seeded inputs and reports pass/fail with a one-line detail. A broken
//! numerical environment (miscompiled kernels, a misbehaving BLAS) shows
//! up here in seconds, without the full test suite.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chernoff::positive_overlap;
use crate::info::{
    fano_lower_bound, fragment_average, helstrom_error, holevo_bits, mutual_information,
    pe_star_bound, redundancy, FragmentMetric, FragmentSampler, InformationReport,
};
use crate::linalg::{
    adjoint, matmul, random_matrix, trace, trace_norm, ComplexMatrix, DensityMatrix,
};
use crate::model::{random_two_level_model, DecoherenceModel, Fragment, PointerSpec, SubsystemSpec};
use crate::photon::{
    build_sky_partition, decoherence_time, photon_chernoff_overlap, projector_overlap_deviation,
    receptivity, sky_model, BlackbodySpectrum, KernelSpec, Scatterer, SkyModel, SkyPatch,
};

/// Slack applied to every inequality check, matching the tolerance the
/// underlying bounds are certified to.
pub const CHECK_SLACK: f64 = 1e-9;

/// One named check: what was verified, whether it held, and a short
/// human-readable margin or failure description.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A suite of related checks, reported together.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/* Run one check, folding any computational error into a failed outcome so
 * a suite always produces a complete report. */
fn run_check<F>(checks: &mut Vec<CheckOutcome>, name: &str, body: F)
where
    F: FnOnce() -> Result<(bool, String), String>,
{
    let (passed, detail) = match body() {
        Ok(result) => result,
        Err(e) => (false, format!("computation failed: {e}")),
    };
    checks.push(CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
    });
}

/// Information bounds on random pure-decoherence models: the Fano lower
/// bound sits below χ, χ below the mutual information, and the Helstrom
/// error below its product bound at every exponent, all within
/// [`CHECK_SLACK`].
pub fn bound_chain_suite(master_seed: u64) -> SuiteReport {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ 0x626f756e64);

    let mut worst_fano: (f64, String) = (f64::NEG_INFINITY, String::new());
    let mut worst_chi: (f64, String) = (f64::NEG_INFINITY, String::new());
    let mut worst_pe: (f64, String) = (f64::NEG_INFINITY, String::new());
    let mut pe_range_ok = true;

    let mut body = || -> Result<(), String> {
        for case in 0..6 {
            let pure = case % 2 == 0;
            let model = random_two_level_model(5, 2, pure, &mut rng);
            let priors = model.pointer().probabilities().to_vec();
            let h_s = model.pointer().pointer_entropy_bits();
            for &t in &[0.4, 1.1] {
                let ensemble = model.branch_ensemble(t).map_err(|e| e.to_string())?;
                for m in 1..=3 {
                    let fragment = Fragment::leading(m, 5).map_err(|e| e.to_string())?;
                    let tag = format!("case {case}, t {t}, m {m}");

                    let chi =
                        holevo_bits(&ensemble, &fragment, &priors).map_err(|e| e.to_string())?;
                    let mi =
                        mutual_information(&model, &fragment, t).map_err(|e| e.to_string())?;
                    let pe =
                        helstrom_error(&ensemble, &fragment, &priors).map_err(|e| e.to_string())?;
                    let fano = fano_lower_bound(pe, h_s).map_err(|e| e.to_string())?;

                    if !(0.0..=0.5).contains(&pe) {
                        pe_range_ok = false;
                    }
                    if fano - chi > worst_fano.0 {
                        worst_fano = (fano - chi, tag.clone());
                    }
                    if chi - mi > worst_chi.0 {
                        worst_chi = (chi - mi, tag.clone());
                    }
                    for i in 1..=9 {
                        let c = i as f64 / 10.0;
                        let star = pe_star_bound(&ensemble, &fragment, &priors, c)
                            .map_err(|e| e.to_string())?;
                        if pe - star > worst_pe.0 {
                            worst_pe = (pe - star, format!("{tag}, c {c}"));
                        }
                    }
                }
            }
        }
        Ok(())
    };
    let outcome = body();

    run_check(&mut checks, "fano-below-holevo", || {
        outcome.clone()?;
        Ok((
            worst_fano.0 <= CHECK_SLACK,
            format!("worst excess {:.3e} at {}", worst_fano.0, worst_fano.1),
        ))
    });
    run_check(&mut checks, "holevo-below-mutual-information", || {
        outcome.clone()?;
        Ok((
            worst_chi.0 <= CHECK_SLACK,
            format!("worst excess {:.3e} at {}", worst_chi.0, worst_chi.1),
        ))
    });
    run_check(&mut checks, "helstrom-below-product-bound", || {
        outcome.clone()?;
        Ok((
            worst_pe.0 <= CHECK_SLACK,
            format!("worst excess {:.3e} at {}", worst_pe.0, worst_pe.1),
        ))
    });
    run_check(&mut checks, "helstrom-error-in-range", || {
        outcome.clone()?;
        Ok((pe_range_ok, "all P_e within [0, 1/2]".to_string()))
    });

    SuiteReport {
        suite: "bound-chain".to_string(),
        checks,
    }
}

/// The trace inequality behind the product bound: for PSD A, B and any
/// c ∈ (0, 1), tr[A^c B^{1−c}] ≥ (tr A + tr B − tr|A − B|)/2.
pub fn operator_inequality_suite(master_seed: u64) -> SuiteReport {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ 0x747261636521);

    run_check(&mut checks, "power-trace-dominates-distance", || {
        let mut worst = f64::INFINITY;
        let mut worst_tag = String::new();
        for case in 0..40 {
            let dim = rng.gen_range(2..=6);
            let random_psd = |rng: &mut ChaCha8Rng| -> ComplexMatrix {
                let g = random_matrix(dim, rng);
                matmul(&adjoint(&g), &g)
            };
            let a = random_psd(&mut rng);
            let b = random_psd(&mut rng);
            let lhs_base = 0.5
                * (trace(&a).re + trace(&b).re
                    - trace_norm(&(&a - &b)).map_err(|e| e.to_string())?);
            for &c in &[0.1, 0.3, 0.5, 0.7, 0.9] {
                let overlap = positive_overlap(&a, &b, c).map_err(|e| e.to_string())?;
                let margin = overlap - lhs_base;
                if margin < worst {
                    worst = margin;
                    worst_tag = format!("case {case}, dim {dim}, c {c}");
                }
            }
        }
        Ok((
            worst >= -CHECK_SLACK,
            format!("smallest margin {worst:.3e} at {worst_tag}"),
        ))
    });

    SuiteReport {
        suite: "operator-inequality".to_string(),
        checks,
    }
}

fn photon_fixture(patch: SkyPatch) -> Result<SkyModel, String> {
    let partition = build_sky_partition(36, patch).map_err(|e| e.to_string())?;
    let spectrum = BlackbodySpectrum::with_node_count(1.0, 3).map_err(|e| e.to_string())?;
    sky_model(
        partition,
        spectrum,
        KernelSpec::SmallAngle {
            width: 0.1,
            strength: 0.8,
        },
        [0.0, 0.0, 0.0],
        [0.3, -0.2, 1.0],
    )
    .map_err(|e| e.to_string())
}

/// Photon-record identities on a small sky: exponent independence of the
/// projector overlap, the exact split of the scattering disturbance, and
/// the receptivity limits.
pub fn photon_identity_suite(_master_seed: u64) -> SuiteReport {
    let mut checks = Vec::new();

    run_check(&mut checks, "overlap-exponent-independent", || {
        let model = photon_fixture(SkyPatch::Cap { half_angle: 1.0 })?;
        let deviation =
            projector_overlap_deviation(&model, &[0.25, 0.5, 0.75]).map_err(|e| e.to_string())?;
        Ok((
            deviation <= CHECK_SLACK,
            format!("worst deviation {deviation:.3e} across exponents"),
        ))
    });

    run_check(&mut checks, "disturbance-apportioned", || {
        /* D, summed over whole rows of T = U − I, must equal 2·♯𝔹·κ, which
         * only touches the diagonal of U; and 1 − overlap must equal 2ακ. */
        let model = photon_fixture(SkyPatch::Cap { half_angle: 1.0 })?;
        let n_b = model.partition().patch_cell_count() as f64;
        let mut d_direct = 0.0;
        for (j, &w) in model.spectrum().weights().iter().enumerate() {
            let s1 = model.scattering_matrix(Scatterer::X1, j).map_err(|e| e.to_string())?;
            let s2 = model.scattering_matrix(Scatterer::X2, j).map_err(|e| e.to_string())?;
            let u = matmul(&adjoint(&s1), &s2);
            for row in 0..model.partition().cell_count() {
                if !model.partition().is_member(row) {
                    continue;
                }
                for col in 0..model.partition().cell_count() {
                    let t = if row == col {
                        u[(row, col)] - C64::new(1.0, 0.0)
                    } else {
                        u[(row, col)]
                    };
                    d_direct += w * t.norm_sqr();
                }
            }
        }
        let kappa = decoherence_time(&model, 1.0).map_err(|e| e.to_string())?.kappa;
        let alpha = receptivity(&model).map_err(|e| e.to_string())?;
        let overlap = photon_chernoff_overlap(&model).map_err(|e| e.to_string())?;
        let split = (d_direct - 2.0 * n_b * kappa).abs() / d_direct.max(1.0);
        let relation = ((1.0 - overlap) - 2.0 * alpha * kappa).abs();
        Ok((
            split <= CHECK_SLACK && relation <= CHECK_SLACK,
            format!("row-sum vs diagonal {split:.3e}, overlap relation {relation:.3e}"),
        ))
    });

    run_check(&mut checks, "full-sphere-receptivity-zero", || {
        let model = photon_fixture(SkyPatch::FullSphere)?;
        let alpha = receptivity(&model).map_err(|e| e.to_string())?;
        Ok((alpha == 0.0, format!("alpha {alpha:.3e}")))
    });

    SuiteReport {
        suite: "photon-identity".to_string(),
        checks,
    }
}

/* Every float and integer a redundancy report carries, as exact bits. */
fn report_fingerprint(report: &InformationReport) -> Vec<u64> {
    let mut bits = vec![
        report.time.to_bits(),
        report.environment_size as u64,
        report.h_s_bits.to_bits(),
        report.delta.to_bits(),
        report.target_bits.to_bits(),
        report.m_delta.map_or(u64::MAX, |m| m as u64),
        report.redundancy.to_bits(),
        report.interpolated_m.map_or(u64::MAX, f64::to_bits),
    ];
    let opt = |v: Option<f64>| v.map_or(u64::MAX, f64::to_bits);
    for row in &report.rows {
        bits.push(row.m as u64);
        bits.push(row.chi_mean_bits.to_bits());
        bits.push(row.chi_stderr.to_bits());
        bits.push(opt(row.i_mean_bits));
        bits.push(opt(row.pe_mean));
        bits.push(opt(row.fano_lb_bits));
        bits.push(opt(row.fid_ub_bits));
    }
    bits
}

fn uniform_qubit_model(environment_size: usize) -> Result<DecoherenceModel, String> {
    let pointer = PointerSpec::qubit_superposition(0.5, 0.0).map_err(|e| e.to_string())?;
    let half = C64::new(0.5, 0.0);
    let plus = DensityMatrix::new(
        ComplexMatrix::from_shape_vec((2, 2), vec![half, half, half, half]).expect("2x2 shape"),
    )
    .map_err(|e| e.to_string())?;
    let sigma_z = ComplexMatrix::from_shape_vec(
        (2, 2),
        vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 0.0),
        ],
    )
    .expect("2x2 shape");
    let template = SubsystemSpec::new(plus, sigma_z, ComplexMatrix::zeros((2, 2)))
        .map_err(|e| e.to_string())?;
    DecoherenceModel::new_iid(pointer, template, environment_size).map_err(|e| e.to_string())
}

/// Repeat-run determinism: sampled fragment averages, redundancy reports,
/// and photon overlaps must reproduce bit for bit under a fixed seed.
pub fn determinism_suite(master_seed: u64) -> SuiteReport {
    let mut checks = Vec::new();

    run_check(&mut checks, "fragment-average-bitwise", || {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ 0x66726167);
        let model = random_two_level_model(8, 2, true, &mut rng);
        let sampler =
            FragmentSampler::monte_carlo(master_seed, 24, 8).map_err(|e| e.to_string())?;
        let run = || {
            fragment_average(&model, 0.7, 3, FragmentMetric::HolevoBits, &sampler)
                .map_err(|e| e.to_string())
        };
        let (a_mean, a_err) = run()?;
        let (b_mean, b_err) = run()?;
        Ok((
            a_mean.to_bits() == b_mean.to_bits() && a_err.to_bits() == b_err.to_bits(),
            format!("mean {a_mean:.12e} +/- {a_err:.3e}, twice"),
        ))
    });

    run_check(&mut checks, "redundancy-report-bitwise", || {
        let model = uniform_qubit_model(6)?;
        let sampler = FragmentSampler::exhaustive(master_seed, 6);
        let run = || {
            redundancy(&model, std::f64::consts::PI / 5.0, 0.2, &sampler)
                .map_err(|e| e.to_string())
        };
        let a = report_fingerprint(&run()?);
        let b = report_fingerprint(&run()?);
        Ok((a == b, format!("{} fields compared", a.len())))
    });

    run_check(&mut checks, "photon-overlap-bitwise", || {
        let model = photon_fixture(SkyPatch::Cap { half_angle: 1.0 })?;
        let a = photon_chernoff_overlap(&model).map_err(|e| e.to_string())?;
        let b = photon_chernoff_overlap(&model).map_err(|e| e.to_string())?;
        Ok((a.to_bits() == b.to_bits(), format!("overlap {a:.12e}, twice")))
    });

    SuiteReport {
        suite: "determinism".to_string(),
        checks,
    }
}

/// All suites, in a fixed order.
pub fn run_all(master_seed: u64) -> Vec<SuiteReport> {
    vec![
        bound_chain_suite(master_seed),
        operator_inequality_suite(master_seed),
        photon_identity_suite(master_seed),
        determinism_suite(master_seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_and_name_their_checks() {
        let reports = run_all(11);
        assert_eq!(reports.len(), 4);
        for report in &reports {
            assert!(!report.checks.is_empty());
            for check in &report.checks {
                assert!(
                    check.passed,
                    "{}/{} failed: {}",
                    report.suite, check.name, check.detail
                );
            }
            assert!(report.passed());
        }
        let names: Vec<&str> = reports.iter().map(|r| r.suite.as_str()).collect();
        assert_eq!(
            names,
            ["bound-chain", "operator-inequality", "photon-identity", "determinism"]
        );
    }

    #[test]
    fn failed_computations_become_failed_checks() {
        let mut checks = Vec::new();
        run_check(&mut checks, "deliberate", || Err("boom".to_string()));
        assert!(!checks[0].passed);
        assert!(checks[0].detail.contains("boom"));
        let report = SuiteReport {
            suite: "demo".to_string(),
            checks,
        };
        assert!(!report.passed());
    }
}
