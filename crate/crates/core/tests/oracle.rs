use bandlet::estimator::{to_coefficient_units, Estimator, EstimatorConfig};
use bandlet::geometry::{alpert_forward, build_alpert, enumerate_flows, FlowConfig};
use bandlet::pyramid::{dwt2, Orientation};
use bandlet::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `min_I ‖c − c_I‖² + |I|·T²` by enumerating every subset.
fn subset_minimum(c: &[f64], t: f64) -> f64 {
    (0u32..1 << c.len())
        .map(|mask| {
            let residual: f64 = (0..c.len())
                .filter(|i| mask >> i & 1 == 0)
                .map(|i| c[i] * c[i])
                .sum();
            residual + mask.count_ones() as f64 * t * t
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn oracle_matches_brute_force_over_a_tiny_dictionary() {
    let cfg = EstimatorConfig {
        flow: FlowConfig {
            max_degree: 0,
            levels: 3,
            ..FlowConfig::for_order(2)
        },
        depth: None,
    };
    let est = Estimator::new(cfg.clone()).unwrap();
    let flows = enumerate_flows(2, &cfg.flow);
    assert_eq!(flows.len(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let f = Image::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let t = rng.gen_range(0.05..0.4);
        let report = est.oracle_cost(&f, t, 0.1).unwrap();

        let pyr = dwt2(&to_coefficient_units(&f), 2, est.filter()).unwrap();
        let coarse: Vec<f64> = Orientation::ALL
            .iter()
            .map(|&o| pyr.subband(2, o)[[0, 0]])
            .collect();
        let mut brute = t * t + subset_minimum(&coarse, t);
        // Each depth-1 subband is one 2×2 square; bases are flow triples, and
        // the cost of a triple is additive, so enumerate per subband.
        for o in Orientation::ALL {
            let block: Vec<f64> = pyr.subband(1, o).iter().copied().collect();
            let mut per_flow = Vec::new();
            for flow in &flows {
                let c = match flow {
                    None => block.clone(),
                    Some(fl) => alpert_forward(&block, &build_alpert(2, fl, 2).unwrap()).unwrap(),
                };
                per_flow.push(subset_minimum(&c, t));
            }
            brute += per_flow.into_iter().fold(f64::INFINITY, f64::min);
        }
        assert!(
            (report.oracle_total - brute).abs() <= 1e-12,
            "{} vs {brute}",
            report.oracle_total
        );
    }
}
