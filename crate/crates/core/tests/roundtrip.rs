use ggm::io::{read_graph, read_model, read_samples, write_graph, write_model, write_samples};
use ggm::model::{build_instance, ModelFamily};
use ggm::sampling::{sample, CovarianceEstimate, MeanMode};
use ggm::slice::slice;
use ggm::dice::{dice, DiceOptions};
use ggm::regression::L0Strategy;

#[test]
fn model_samples_graph_files() {
    let m = build_instance(&ModelFamily::TriangleCloud {
        kappa: 0.4,
        epsilon: 0.01,
        sigma2: 1000.0,
        p: 12,
    })
    .unwrap();
    let mut buf = Vec::new();
    write_model(&m, &mut buf).unwrap();
    let back = read_model(&buf[..]).unwrap();
    assert_eq!(back.theta, m.theta);
    assert_eq!(back.family, m.family);

    let s = sample(&back, 300, 1).unwrap();
    let mut csv = Vec::new();
    write_samples(&s, &mut csv, true).unwrap();
    let s2 = read_samples(&csv[..], MeanMode::KnownZeroMean).unwrap();
    assert_eq!(s2.data, s.data);
    assert_eq!(
        slice(&s2, 2, 0.4, L0Strategy::Exhaustive).unwrap(),
        slice(&s, 2, 0.4, L0Strategy::Exhaustive).unwrap()
    );

    for g in [
        slice(&CovarianceEstimate::population(&m), 2, 0.4, L0Strategy::Exhaustive).unwrap(),
        dice(&CovarianceEstimate::population(&m), 2, 0.4, DiceOptions::default()).unwrap(),
    ] {
        let mut out = Vec::new();
        write_graph(&g, &mut out).unwrap();
        let g2 = read_graph(&out[..]).unwrap();
        assert_eq!(g2.edges, g.edges);
        assert_eq!(g2.neighborhoods, g.neighborhoods);
        assert_eq!(g2.kappa_hat, g.kappa_hat);
        assert_eq!(g2.pair_strength(0, 1), g.pair_strength(0, 1));
    }
}
