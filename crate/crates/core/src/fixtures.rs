//! Bundled miniature datasets with pinned expectations, so the test
//! suite runs offline and deterministically.
//!
//! Every fixture regenerates from an embedded spec — a tiled wave, a
//! generator spec JSON, a seeded recursion — and ships alongside the test
//! suite as plain CSV/JSON under `crates/core/fixtures/`. No opaque
//! blobs: the committed files are byte-compared against regeneration by
//! the test suite, and each pinned value records the oracle or
//! construction that produced it.
//!
//! Real-world datasets are deliberately not bundled; the README shows how
//! to map downloaded data onto the CSV loader instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::series::CountSeries;
use crate::synth::CoupledSpec;

/// Construction period of the seasonal fixture.
pub const SEASONAL_PERIOD: usize = 13;

/// One period of the discretized seasonal wave (rounded sinusoid around a
/// mean of 40); tiling it four times yields the 52-week series with exact
/// shift-invariance at lag 13.
const SEASONAL_WAVE: [f64; SEASONAL_PERIOD] = [
    40.0, 54.0, 65.0, 70.0, 68.0, 60.0, 47.0, 33.0, 20.0, 12.0, 10.0, 15.0, 26.0,
];

/// Model-polynomial seed of the coupled fixture, frozen by the
/// `fixture_seed_scan` procedure below: the first candidate whose
/// generated pair satisfies the selection rule (ground lag-1
/// autocorrelation at least 0.9, variance/mean ratio in [2, 8], pair
/// correlation at least 0.5). Seed 25 measures 0.961 / 3.12 / 0.982.
pub const COUPLED_MODEL_SEED: u64 = 25;

/// Generation seed of the coupled fixture (innovation streams).
pub const COUPLED_GENERATION_SEED: u64 = 1;

/// Seed and length of the ARCH(1) residual trace.
pub const ARCH_TRACE_SEED: u64 = 7;
const ARCH_TRACE_LENGTH: usize = 300;

/// One pinned expectation: the fixture quantity `name` must land within
/// `tolerance` of `value`, for the reason `provenance` records.
#[derive(Debug, Clone)]
pub struct PinnedValue {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub provenance: &'static str,
}

/// A bundled dataset: regenerable CSV payload, optional generator spec
/// JSON, a provenance note, and the pinned expectations.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub csv: String,
    pub spec_json: Option<String>,
    pub provenance: &'static str,
    pub pinned: Vec<PinnedValue>,
}

/// The 52-week seasonal count series: four exact repetitions of
/// [`SEASONAL_WAVE`].
pub fn seasonal_series() -> CountSeries {
    let values: Vec<f64> = (0..4 * SEASONAL_PERIOD)
        .map(|t| SEASONAL_WAVE[t % SEASONAL_PERIOD])
        .collect();
    CountSeries::new("seasonal_cases", values).expect("wave values are nonnegative")
}

/// The pinned coupled-pair generator spec.
pub fn coupled_spec() -> Result<CoupledSpec> {
    CoupledSpec::with_default_orders(COUPLED_MODEL_SEED, COUPLED_GENERATION_SEED)
}

/// The pinned ARCH(1) residual trace: `e_t = z_t * sigma_t` with
/// `sigma_t^2 = 0.2 + 0.7 e_{t-1}^2`, started at the stationary variance
/// and burned in for 200 steps.
pub fn arch_residual_trace() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(ARCH_TRACE_SEED);
    let burn = 200;
    let mut e_prev_sq: f64 = 0.2 / 0.3;
    let mut out = Vec::with_capacity(ARCH_TRACE_LENGTH);
    for t in 0..burn + ARCH_TRACE_LENGTH {
        let sigma2 = 0.2 + 0.7 * e_prev_sq;
        let e = rng.sample::<f64, _>(StandardNormal) * sigma2.sqrt();
        e_prev_sq = e * e;
        if t >= burn {
            out.push(e);
        }
    }
    out
}

fn seasonal_csv() -> String {
    let mut csv = String::from("week,cases\n");
    for (t, v) in seasonal_series().values().iter().enumerate() {
        csv.push_str(&format!("{t},{v}\n"));
    }
    csv
}

fn coupled_csv(spec: &CoupledSpec) -> Result<String> {
    let pair = spec.generate()?;
    let mut csv = String::from("t,external,ground\n");
    for (t, (s, x)) in pair
        .external
        .values()
        .iter()
        .zip(pair.ground.values())
        .enumerate()
    {
        // Default float formatting is shortest-round-trip, so parsing the
        // payload recovers the generated values bit for bit.
        csv.push_str(&format!("{t},{s},{x}\n"));
    }
    Ok(csv)
}

fn arch_csv() -> String {
    let mut csv = String::from("t,residual\n");
    for (t, e) in arch_residual_trace().iter().enumerate() {
        csv.push_str(&format!("{t},{e}\n"));
    }
    csv
}

/// Builds the full fixture catalog by regenerating every payload from its
/// embedded spec.
pub fn fixture_catalog() -> Result<Vec<Fixture>> {
    let spec = coupled_spec()?;
    Ok(vec![
        Fixture {
            name: "seasonal",
            csv: seasonal_csv(),
            spec_json: None,
            provenance: "four exact repetitions of a 13-point discretized seasonal wave; \
                         periodicity is by construction, not estimation",
            pinned: vec![
                PinnedValue {
                    name: "dominant_lag",
                    value: SEASONAL_PERIOD as f64,
                    tolerance: 0.0,
                    provenance: "construction period: overlapping windows at lag 13 are \
                                 identical, so no other lag can beat them",
                },
                PinnedValue {
                    name: "autocorrelation_at_period",
                    value: 1.0,
                    tolerance: 1e-9,
                    provenance: "correlation of a periodic series with its own exact \
                                 period shift is 1 (trivial construction)",
                },
            ],
        },
        Fixture {
            name: "coupled",
            csv: coupled_csv(&spec)?,
            spec_json: Some(spec.to_json()?),
            provenance: "generated from the embedded spec JSON; model seed frozen by the \
                         fixture_seed_scan selection rule, payload regenerates bit-identically",
            pinned: vec![
                PinnedValue {
                    name: "ground_lag1_autocorrelation",
                    value: 0.95,
                    tolerance: 0.05,
                    provenance: "selection rule: persistent ground truth, lag-1 \
                                 autocorrelation in [0.9, 1.0] (verified by the seed scan)",
                },
                PinnedValue {
                    name: "ground_variance_mean_ratio",
                    value: 5.0,
                    tolerance: 3.0,
                    provenance: "selection rule: overdispersion ratio in [2, 8], keeping \
                                 both terms of the thinned variance relevant at desk scale",
                },
                PinnedValue {
                    name: "pair_pearson",
                    value: 0.75,
                    tolerance: 0.25,
                    provenance: "selection rule: pair correlation in [0.5, 1.0] so external \
                                 metrics have signal to lose under thinning",
                },
            ],
        },
        Fixture {
            name: "arch1",
            csv: arch_csv(),
            spec_json: None,
            provenance: "seeded ARCH(1) recursion (alpha0 = 0.2, alpha1 = 0.7) with 200 \
                         burn-in steps; regenerates from the embedded constants",
            pinned: vec![PinnedValue {
                name: "lag1_rejection_p_value",
                value: 0.025,
                tolerance: 0.025,
                provenance: "power oracle: the LM test rejects homoskedasticity at the 5% \
                             level on a strongly ARCH(1) trace of this length",
            }],
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::elm_arch_test;
    use crate::harness::load_series_csv;
    use crate::series::pearson;
    use std::path::PathBuf;

    fn fixtures_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
    }

    fn parse_column(csv: &str, index: usize) -> Vec<f64> {
        csv.lines()
            .skip(1)
            .map(|line| line.split(',').nth(index).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn catalog_holds_three_documented_fixtures() {
        let catalog = fixture_catalog().unwrap();
        assert!(catalog.len() >= 3);
        for fixture in &catalog {
            assert!(!fixture.provenance.is_empty(), "{}", fixture.name);
            assert!(!fixture.pinned.is_empty(), "{}", fixture.name);
            for pin in &fixture.pinned {
                assert!(!pin.provenance.is_empty(), "{}/{}", fixture.name, pin.name);
                assert!(pin.tolerance >= 0.0);
            }
            assert!(fixture.csv.lines().count() > 1);
        }
    }

    #[test]
    fn seasonal_fixture_has_its_construction_period_as_dominant_lag() {
        let series = seasonal_series();
        assert_eq!(series.len(), 52);
        assert_eq!(series.dominant_lag(26).unwrap(), SEASONAL_PERIOD);
    }

    /// Recomputes every pinned quantity from the regenerated payloads and
    /// checks it against its pinned value.
    #[test]
    fn pinned_values_hold_on_regeneration() {
        for fixture in fixture_catalog().unwrap() {
            for pin in &fixture.pinned {
                let computed = match (fixture.name, pin.name) {
                    ("seasonal", "dominant_lag") => {
                        seasonal_series().dominant_lag(26).unwrap() as f64
                    }
                    ("seasonal", "autocorrelation_at_period") => seasonal_series()
                        .autocorrelation(SEASONAL_PERIOD)
                        .unwrap(),
                    ("coupled", name) => {
                        let pair = coupled_spec().unwrap().generate().unwrap();
                        match name {
                            "ground_lag1_autocorrelation" => {
                                pair.ground.autocorrelation(1).unwrap()
                            }
                            "ground_variance_mean_ratio" => {
                                let m = pair.ground.moments();
                                m.variance / m.mean
                            }
                            "pair_pearson" => pearson(&pair.ground, &pair.external).unwrap(),
                            other => panic!("unchecked pin {other}"),
                        }
                    }
                    ("arch1", "lag1_rejection_p_value") => {
                        elm_arch_test(&arch_residual_trace(), 1).unwrap().records[0].p_value
                    }
                    (f, p) => panic!("unchecked pin {f}/{p}"),
                };
                assert!(
                    (computed - pin.value).abs() <= pin.tolerance,
                    "{}/{}: computed {computed}, pinned {} +- {}",
                    fixture.name,
                    pin.name,
                    pin.value,
                    pin.tolerance
                );
            }
        }
    }

    #[test]
    fn coupled_fixture_regenerates_bit_identically_from_spec_json() {
        let catalog = fixture_catalog().unwrap();
        let fixture = catalog.iter().find(|f| f.name == "coupled").unwrap();
        let spec = CoupledSpec::from_json(fixture.spec_json.as_ref().unwrap()).unwrap();
        let pair = spec.generate().unwrap();
        assert_eq!(parse_column(&fixture.csv, 1), pair.external.values());
        assert_eq!(parse_column(&fixture.csv, 2), pair.ground.values());
    }

    /// The committed files under `fixtures/` are exactly the regenerated
    /// payloads; regenerate them with `write_fixture_files` below after
    /// any intentional change.
    #[test]
    fn committed_fixture_files_match_regeneration() {
        let dir = fixtures_dir();
        for fixture in fixture_catalog().unwrap() {
            let path = dir.join(format!("{}.csv", fixture.name));
            let on_disk = std::fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
            assert_eq!(on_disk, fixture.csv, "{} drifted", fixture.name);
            if let Some(spec_json) = &fixture.spec_json {
                let spec_path = dir.join(format!("{}_spec.json", fixture.name));
                let on_disk = std::fs::read_to_string(&spec_path).unwrap();
                assert_eq!(&on_disk, spec_json, "{} spec drifted", fixture.name);
            }
        }
    }

    #[test]
    fn committed_coupled_fixture_loads_through_the_csv_loader() {
        let path = fixtures_dir().join("coupled.csv");
        let ground = load_series_csv(&path, "ground").unwrap();
        let external = load_series_csv(&path, "external").unwrap();
        assert_eq!(ground.len(), 365);
        assert_eq!(external.len(), 365);
    }

    /// Maintenance tool, not part of the suite: writes the fixture files
    /// this module's tests compare against. Run with
    /// `cargo test -p predecay write_fixture_files -- --ignored`.
    #[test]
    #[ignore]
    fn write_fixture_files() {
        let dir = fixtures_dir();
        std::fs::create_dir_all(&dir).unwrap();
        for fixture in fixture_catalog().unwrap() {
            std::fs::write(dir.join(format!("{}.csv", fixture.name)), &fixture.csv).unwrap();
            if let Some(spec_json) = &fixture.spec_json {
                std::fs::write(
                    dir.join(format!("{}_spec.json", fixture.name)),
                    spec_json,
                )
                .unwrap();
            }
        }
    }

    /// Maintenance tool, not part of the suite: the procedure that froze
    /// [`COUPLED_MODEL_SEED`]. Prints the selection-rule quantities for
    /// candidate model seeds; the frozen seed is the first one accepted.
    /// Run with `cargo test -p predecay fixture_seed_scan -- --ignored --nocapture`.
    #[test]
    #[ignore]
    fn fixture_seed_scan() {
        for model_seed in 0..40u64 {
            let spec =
                match CoupledSpec::with_default_orders(model_seed, COUPLED_GENERATION_SEED) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("seed {model_seed}: model rejected ({e})");
                        continue;
                    }
                };
            match spec.generate() {
                Ok(pair) => {
                    let ac1 = pair.ground.autocorrelation(1).unwrap();
                    let m = pair.ground.moments();
                    let ratio = m.variance / m.mean;
                    let rho = pearson(&pair.ground, &pair.external).unwrap();
                    let ok = ac1 >= 0.9 && (2.0..=8.0).contains(&ratio) && rho >= 0.5;
                    println!(
                        "seed {model_seed}: ac1 {ac1:.3} var/mean {ratio:.2} rho {rho:.3} \
                         {}",
                        if ok { "ACCEPT" } else { "reject" }
                    );
                }
                Err(e) => println!("seed {model_seed}: generation failed ({e})"),
            }
        }
    }
}
