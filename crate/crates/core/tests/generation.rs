use std::collections::{BTreeSet, HashMap};

use pathload_core::config::*;
use pathload_core::distributions::*;
use pathload_core::graphgen::*;
use proptest::prelude::*;
use rand::RngCore;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn two_types(n: u64, d_in: &str, d_out: &str) -> GraphConfiguration {
    let text = format!(
        r#"<gmark>
  <graph n="{n}"/>
  <types><type name="A" proportion="0.5"/><type name="B" proportion="0.5"/></types>
  <predicates><predicate name="p"/></predicates>
  <constraints>
    <constraint source="A" target="B" predicate="p">{d_in}{d_out}</constraint>
  </constraints>
</gmark>"#
    );
    parse_graph_config(&text).unwrap()
}

fn out_degrees(g: &GraphInstance) -> HashMap<u32, u64> {
    let mut deg = HashMap::new();
    for e in &g.edges {
        *deg.entry(e.source).or_insert(0) += 1;
    }
    deg
}

fn multi() -> GenerationOptions {
    GenerationOptions { allow_multi_edges: true, ..GenerationOptions::default() }
}

#[test]
fn uniform_out_degrees_pass_chi_square() {
    // 10^4 sources, Uniform(1,4), df = 3, significance 0.001.
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
    let cfg = two_types(20_000, r#"<in kind="nonspecified"/>"#, r#"<out kind="uniform" min="1" max="4"/>"#);
    let g = generate_graph_with(&cfg, 11, &multi()).unwrap();
    let deg = out_degrees(&g);
    assert_eq!(deg.len(), 10_000);
    let mut observed = [0f64; 4];
    for &d in deg.values() {
        observed[(d - 1) as usize] += 1.0;
    }
    let expected = 10_000.0 / 4.0;
    let chi2: f64 = observed.iter().map(|o| (o - expected).powi(2) / expected).sum();
    assert!(chi2 < critical, "chi2 = {chi2}, observed {observed:?}");
}

#[test]
fn zipfian_out_degrees_follow_the_exponent() {
    let s = 2.0;
    let cfg = two_types(20_000, r#"<in kind="nonspecified"/>"#, r#"<out kind="zipfian" s="2"/>"#);
    let g = generate_graph_with(&cfg, 5, &multi()).unwrap();
    let mut freq: HashMap<u64, u64> = HashMap::new();
    for d in out_degrees(&g).values() {
        *freq.entry(*d).or_insert(0) += 1;
    }
    // Least squares of ln(frequency) on ln(degree), over well-populated degrees.
    let pts: Vec<(f64, f64)> = freq
        .iter()
        .filter(|(_, &c)| c >= 10)
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64).ln()))
        .collect();
    assert!(pts.len() >= 5);
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(slope < 0.0 && (slope.abs() - s).abs() <= 0.25 * s, "slope {slope}");
}

#[test]
fn gaussian_in_degrees_have_the_right_mean() {
    let (mu, sigma) = (3.0, 1.0);
    let cfg = two_types(20_000, r#"<in kind="gaussian" mu="3" sigma="1"/>"#, r#"<out kind="nonspecified"/>"#);
    let g = generate_graph_with(&cfg, 9, &multi()).unwrap();
    let n_t = 10_000.0;
    let mean = g.edges.len() as f64 / n_t;
    assert!((mean - mu).abs() <= 3.0 * sigma / f64::sqrt(n_t), "mean {mean}");
}

#[test]
fn gaussian_draws_mean() {
    let mut rng = RandomStream::new(3);
    let d = DegreeDistribution::Gaussian { mu: 4.2, sigma: 1.5 };
    let sampler = DegreeSampler::new(&d, 0).unwrap();
    let n = 100_000;
    let mean = (0..n).map(|_| sampler.sample(&mut rng)).sum::<u64>() as f64 / n as f64;
    assert!((mean - 4.2).abs() <= 3.0 * 1.5 / (n as f64).sqrt() + 0.5);
}

#[test]
fn fixed_out_degree_is_exact() {
    let cfg = two_types(1000, r#"<in kind="nonspecified"/>"#, r#"<out kind="uniform" min="3" max="3"/>"#);
    let g = generate_graph_with(&cfg, 1, &multi()).unwrap();
    let deg = out_degrees(&g);
    assert_eq!(deg.len(), 500);
    assert!(deg.values().all(|&d| d == 3));
}

#[test]
fn edges_respect_types_and_counts() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bib.xml")).unwrap();
    let cfg = parse_graph_config(&text).unwrap().with_nodes(5000).unwrap();
    let g = generate_graph(&cfg, 4).unwrap();
    assert_eq!(g.layout.by_name("city").unwrap().count, 100);
    assert_eq!(g.layout.by_name("researcher").unwrap().count, 2500);
    for e in &g.edges {
        let c = cfg.constraints.iter().find(|c| c.predicate == e.predicate).unwrap();
        assert_eq!(g.layout.type_of(e.source as u64), Some(c.source));
        assert_eq!(g.layout.type_of(e.target as u64), Some(c.target));
    }
    let distinct: BTreeSet<_> = g.edges.iter().collect();
    assert_eq!(distinct.len(), g.edges.len());
}

#[test]
fn dedup_equals_set_of_multigraph() {
    let cfg = two_types(400, r#"<in kind="zipfian" s="1.5"/>"#, r#"<out kind="zipfian" s="1.5"/>"#);
    let layout = cfg.resolve_node_counts().unwrap();
    let root = RandomStream::new(8);
    let with = generate_constraint(&cfg, &layout, 0, &root, &multi()).unwrap();
    let without = generate_constraint(&cfg, &layout, 0, &root, &GenerationOptions::default()).unwrap();
    assert_eq!(with.emitted, with.src_len.min(with.trg_len));
    assert_eq!(with.edges.len(), with.emitted);
    let set: BTreeSet<_> = with.edges.iter().copied().collect();
    let kept: BTreeSet<_> = without.edges.iter().copied().collect();
    assert_eq!(set, kept);
    assert_eq!(kept.len(), without.edges.len());
}

#[test]
fn truncated_side_is_sampled_uniformly() {
    // 10 sources with one edge each against 1000 targets of degree one: the
    // ten targets kept must be spread over the whole range, not bunched at
    // the low ids.
    let text = r#"<gmark>
  <graph n="1010"/>
  <types><type name="A" fixed="10"/><type name="B" fixed="1000"/></types>
  <predicates><predicate name="p"/></predicates>
  <constraints>
    <constraint source="A" target="B" predicate="p"><in kind="uniform" min="1" max="1"/><out kind="uniform" min="1" max="1"/></constraint>
  </constraints>
</gmark>"#;
    let cfg = parse_graph_config(text).unwrap();
    let mut total = 0f64;
    let mut count = 0f64;
    for seed in 0..200 {
        let g = generate_graph(&cfg, seed).unwrap();
        assert_eq!(g.edges.len(), 10);
        for e in &g.edges {
            total += (e.target - 11) as f64;
            count += 1.0;
        }
    }
    // Uniform over 0..1000: mean 499.5, standard error about 6.5.
    let mean = total / count;
    assert!((mean - 499.5).abs() < 30.0, "mean target index {mean}");
}

#[test]
fn output_is_byte_identical_for_a_seed() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bib.xml")).unwrap();
    let cfg = parse_graph_config(&text).unwrap();
    let render = |seed| {
        let g = generate_graph(&cfg, seed).unwrap();
        let mut out = Vec::new();
        write_graph(g.edges.iter(), &cfg.predicates, GraphFormat::Tsv, &mut out).unwrap();
        out
    };
    assert_eq!(render(17), render(17));
    assert_ne!(render(17), render(18));
}

proptest! {
    #[test]
    fn draws_stay_in_support(seed in any::<u64>(), lo in 0u64..10, span in 0u64..10, s in 0.2f64..3.0, k in 1u64..500) {
        let mut rng = RandomStream::new(seed);
        for _ in 0..50 {
            let u = draw(&DegreeDistribution::Uniform { min: lo, max: lo + span }, 0, &mut rng).unwrap();
            prop_assert!((lo..=lo + span).contains(&u));
            let z = draw(&DegreeDistribution::Zipfian { s, max: None }, k, &mut rng).unwrap();
            prop_assert!((1..=k).contains(&z));
        }
        prop_assert!(draw(&DegreeDistribution::NonSpecified, k, &mut rng).is_err());
    }

    #[test]
    fn equal_seeds_give_equal_streams(seed in any::<u64>(), ops in prop::collection::vec(0u8..3, 1..40)) {
        let (mut a, mut b) = (RandomStream::new(seed), RandomStream::new(seed));
        for op in ops {
            match op {
                0 => prop_assert_eq!(a.next_u64(), b.next_u64()),
                1 => {
                    let d = DegreeDistribution::Gaussian { mu: 2.0, sigma: 1.0 };
                    prop_assert_eq!(draw(&d, 0, &mut a).unwrap(), draw(&d, 0, &mut b).unwrap());
                }
                _ => {
                    let (mut x, mut y): (Vec<u32>, Vec<u32>) = ((0..20).collect(), (0..20).collect());
                    shuffle(&mut x, &mut a);
                    shuffle(&mut y, &mut b);
                    prop_assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn zipf_probabilities_sum_to_one(s in 0.1f64..4.0, k in 1u64..2000) {
        let t = ZipfTable::new(s, k);
        let total: f64 = (1..=k).map(|i| t.probability(i)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert_eq!(t.probability(k + 1), 0.0);
    }
}
