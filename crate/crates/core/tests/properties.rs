use hic_zeroshot::data::{generate_topic_corpus, TopicCorpusSpec};
use hic_zeroshot::forest::{
    self, cofi_gain, information_gain, BowHistogram, ForestConfig, LabeledDescriptor, Node, Variant,
};
use hic_zeroshot::phog::{self, Descriptor, ImageFeatures, PhogConfig, RasterImage};
use hic_zeroshot::plsa::{self, Corpus, EmConfig, PlsaModel};
use hic_zeroshot::taxonomy::{CoarseClassId, FineClassId, Taxonomy};
use hic_zeroshot::zeroshot::{
    signature_set, ClassifierOptions, PairPolicy, TopicSet, ZeroShotClassifier,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn entropy_oracle(labels: &[usize]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let n = labels.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn gain_oracle(left: &[usize], right: &[usize]) -> f64 {
    let node: Vec<usize> = left.iter().chain(right).copied().collect();
    let n = node.len() as f64;
    entropy_oracle(&node)
        - left.len() as f64 / n * entropy_oracle(left)
        - right.len() as f64 / n * entropy_oracle(right)
}

// PHOG

fn random_image(seed: u64, w: usize, h: usize, channels: usize) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..w * h * channels).map(|_| rng.random::<f64>() * 255.0).collect();
    RasterImage::new(w, h, channels, data).unwrap()
}

fn stripes(w: usize, h: usize, period: f64, vertical: bool) -> RasterImage {
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let t = if vertical { x } else { y } as f64;
            data.push(128.0 + 100.0 * (std::f64::consts::TAU * t / period).sin());
        }
    }
    RasterImage::new(w, h, 1, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phog_descriptors_are_normalized(seed in any::<u64>(), w in 16usize..48, h in 16usize..48,
                                       levels in 0usize..3, bins in 4usize..24, color in any::<bool>()) {
        let img = random_image(seed, w, h, if color { 3 } else { 1 });
        let cfg = PhogConfig { levels, bins, ..Default::default() };
        let f = phog::extract(&img, &cfg).unwrap();
        let expected: usize = (0..=levels).map(|l| 4usize.pow(l as u32)).sum();
        prop_assert_eq!(f.len(), expected);
        for d in &f.descriptors {
            prop_assert_eq!(d.values.len(), bins);
            prop_assert!(d.values.iter().all(|&v| v >= 0.0));
            prop_assert!((d.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn phog_ignores_intensity_scale(seed in any::<u64>(), factor in 0.01f64..20.0) {
        let img = random_image(seed, 24, 24, 1);
        let cfg = PhogConfig { levels: 2, ..Default::default() };
        let a = phog::extract(&img, &cfg).unwrap();
        let b = phog::extract(&img.scaled(factor), &cfg).unwrap();
        for (da, db) in a.descriptors.iter().zip(&b.descriptors) {
            let linf = da.values.iter().zip(&db.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(linf <= 1e-9, "L-inf {}", linf);
        }
    }

    #[test]
    fn rotated_stripes_move_to_the_bin_ninety_degrees_away(period in 4.0f64..16.0, size in 20usize..48) {
        let cfg = PhogConfig { levels: 0, bins: 20, ..Default::default() };
        let img = stripes(size, size, period, true);
        let before = phog::extract(&img, &cfg).unwrap().descriptors[0].values.clone();
        let after = phog::extract(&img.rotated_90(), &cfg).unwrap().descriptors[0].values.clone();
        let peak = (0..20).max_by(|&a, &b| before[a].total_cmp(&before[b])).unwrap();
        prop_assert!(before[peak] >= 0.9);
        let target = (peak + 10) % 20;
        prop_assert!(after[target] >= 0.9, "bin {} holds {}", target, after[target]);
    }
}

// Forest

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cofi_gain_is_coarse_plus_fine(
        labels in prop::collection::vec((0usize..4, 0usize..6), 2..40),
        cut in any::<prop::sample::Index>(),
    ) {
        let split = 1 + cut.index(labels.len() - 1);
        let (left, right) = labels.split_at(split);
        let total = cofi_gain(&labels, left, right).unwrap();
        let c = |s: &[(usize, usize)]| s.iter().map(|l| l.0).collect::<Vec<_>>();
        let f = |s: &[(usize, usize)]| s.iter().map(|l| l.1).collect::<Vec<_>>();
        let coarse = information_gain(&c(&labels), &c(left), &c(right)).unwrap();
        let fine = information_gain(&f(&labels), &f(left), &f(right)).unwrap();
        prop_assert!((total - (coarse + fine)).abs() <= 1e-12);
        prop_assert!((coarse - gain_oracle(&c(left), &c(right))).abs() <= 1e-12);
        prop_assert!((fine - gain_oracle(&f(left), &f(right))).abs() <= 1e-12);
    }
}

fn labelled_blobs(seed: u64, n: usize, dim: usize) -> Vec<LabeledDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let fine = rng.random_range(0..6usize);
            let values = (0..dim)
                .map(|j| (fine * (j + 1)) as f64 * 0.1 + rng.random::<f64>() * 0.5)
                .collect();
            LabeledDescriptor {
                values,
                fine: FineClassId(fine),
                coarse: CoarseClassId(fine / 3),
            }
        })
        .collect()
}

fn random_features(rng: &mut ChaCha8Rng, dim: usize) -> ImageFeatures {
    let n = rng.random_range(1..30);
    ImageFeatures {
        descriptors: (0..n)
            .map(|_| Descriptor {
                level: 0,
                cell_index: 0,
                values: (0..dim).map(|_| rng.random::<f64>() * 2.0).collect(),
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forests_split_only_on_positive_gain_and_are_seeded(
        seed in any::<u64>(),
        variant in prop::sample::select(vec![Variant::Fine, Variant::Coarse, Variant::CoFi, Variant::JCoFi { coarse_trees: None }]),
    ) {
        let data = labelled_blobs(seed, 200, 4);
        let cfg = ForestConfig { num_trees: 4, max_leaves_per_tree: 12, variant, rng_seed: seed, ..Default::default() };
        let a = forest::train(&data, &cfg).unwrap();
        for tree in a.trees() {
            for node in tree.nodes() {
                if let Node::Split { gain, .. } = node {
                    prop_assert!(*gain > 0.0);
                }
            }
        }
        let b = forest::train(&data, &cfg).unwrap();
        prop_assert_eq!(&a, &b);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let f = random_features(&mut rng, 4);
            let h = a.quantize(&f).unwrap();
            prop_assert_eq!(h.len(), a.vocab_size());
            prop_assert_eq!(h.total(), (f.len() * a.trees().len()) as u64);
        }
    }
}

#[test]
fn jcofi_coarse_trees_see_siblings_alike() {
    let data = labelled_blobs(3, 300, 4);
    let cfg = ForestConfig {
        num_trees: 4,
        max_leaves_per_tree: 10,
        variant: Variant::JCoFi { coarse_trees: None },
        ..Default::default()
    };
    let cb = forest::train(&data, &cfg).unwrap();
    let coarse_words: usize = cb
        .trees()
        .iter()
        .filter(|t| t.objective() == forest::Objective::Coarse)
        .map(|t| t.leaf_count())
        .sum();
    // Two images of sibling classes built from the same descriptor multiset,
    // in different orders, fall into the same coarse-tree leaves.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let first = random_features(&mut rng, 4);
    let mut second = first.clone();
    second.descriptors.reverse();
    second.descriptors.rotate_left(first.len() / 2);
    let a = cb.quantize(&first).unwrap();
    let b = cb.quantize(&second).unwrap();
    assert_eq!(&a.counts[..coarse_words], &b.counts[..coarse_words]);
    let coarse_count: u32 = a.counts[..coarse_words].iter().sum();
    assert_eq!(coarse_count as usize, 2 * first.len());
}

// pLSA

fn random_corpus(seed: u64, n: usize, v: usize) -> Vec<BowHistogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut counts: Vec<u32> = (0..v).map(|_| rng.random_range(0..4)).collect();
            counts[rng.random_range(0..v)] += 1;
            BowHistogram::new(counts)
        })
        .collect()
}

fn max_row_deviation(rows: impl Iterator<Item = f64>) -> f64 {
    rows.map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

#[test]
fn em_log_likelihood_never_decreases() {
    for seed in 0..50 {
        let docs = random_corpus(seed, 20, 30);
        let corpus = Corpus::from_histograms(&docs).unwrap();
        let cfg = EmConfig { rng_seed: seed, max_iters: 200, rel_tol: 1e-300, ..Default::default() };
        let m = plsa::fit(&corpus, 4, &cfg).unwrap();
        for w in m.loglik_trace().windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "seed {seed}: {} -> {}", w[0], w[1]);
        }
        let direct = m.log_likelihood(&corpus).unwrap();
        let last = *m.loglik_trace().last().unwrap();
        assert!((direct - last).abs() <= 1e-9 * last.abs());
    }
}

#[test]
fn matrices_stay_row_stochastic_after_every_iteration() {
    let docs = random_corpus(5, 20, 30);
    let corpus = Corpus::from_histograms(&docs).unwrap();
    for iters in 1..=12 {
        let cfg = EmConfig { max_iters: iters, rel_tol: 1e-300, ..Default::default() };
        let m = plsa::fit(&corpus, 4, &cfg).unwrap();
        let tw = max_row_deviation((0..4).map(|z| m.topic_word(z).iter().sum()));
        let dt = max_row_deviation((0..m.num_docs()).map(|d| m.doc_topic(d).iter().sum()));
        assert!(tw <= 1e-9 && dt <= 1e-9, "after {iters}: {tw} {dt}");
    }
}

fn best_permutation_l1(truth: &[Vec<f64>], model: &PlsaModel) -> f64 {
    let k = truth.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    fn permutations(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
        if i == p.len() {
            f(p);
            return;
        }
        for j in i..p.len() {
            p.swap(i, j);
            permutations(p, i + 1, f);
            p.swap(i, j);
        }
    }
    permutations(&mut perm, 0, &mut |p| {
        let mean = (0..k)
            .map(|z| {
                truth[z]
                    .iter()
                    .zip(model.topic_word(p[z]))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / k as f64;
        best = best.min(mean);
    });
    best
}

#[test]
fn recovers_generating_topics() {
    let mut ok = 0;
    for seed in 0..10 {
        let spec = TopicCorpusSpec { rng_seed: seed, ..Default::default() };
        let truth = generate_topic_corpus(&spec).unwrap();
        let corpus = Corpus::from_histograms(&truth.docs).unwrap();
        let m = plsa::fit(&corpus, 3, &EmConfig { rng_seed: seed, ..Default::default() }).unwrap();
        if best_permutation_l1(&truth.topic_word, &m) <= 0.15 {
            ok += 1;
        }
    }
    assert!(ok >= 9, "{ok}/10 seeds recovered");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn vocabulary_permutation_permutes_the_model(seed in any::<u64>(), shuffle in any::<u64>()) {
        let docs = random_corpus(seed, 15, 20);
        let mut perm: Vec<usize> = (0..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for i in (1..20).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // word w of the original corpus becomes word perm[w]
        let permuted: Vec<BowHistogram> = docs
            .iter()
            .map(|d| {
                let mut c = vec![0u32; 20];
                for (w, &n) in d.counts.iter().enumerate() {
                    c[perm[w]] = n;
                }
                BowHistogram::new(c)
            })
            .collect();
        let cfg = EmConfig { rng_seed: seed, max_iters: 50, ..Default::default() };
        let a = plsa::fit(&Corpus::from_histograms(&docs).unwrap(), 3, &cfg).unwrap();
        let b = plsa::fit(&Corpus::from_histograms(&permuted).unwrap(), 3, &cfg).unwrap();
        prop_assert_eq!(a.iterations(), b.iterations());
        for z in 0..3 {
            for w in 0..20 {
                prop_assert!((a.topic_word(z)[w] - b.topic_word(z)[perm[w]]).abs() <= 1e-9);
            }
        }
        for d in 0..docs.len() {
            for z in 0..3 {
                prop_assert!((a.doc_topic(d)[z] - b.doc_topic(d)[z]).abs() <= 1e-9);
            }
        }
    }
}

// Zero-shot

fn mask(bits: &[bool]) -> TopicSet {
    TopicSet::from_indices(bits.len(), bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i))
}

fn brute_force_signature(profile: &[f64]) -> Vec<usize> {
    let k = profile.len();
    let cost = 1.0 / k as f64;
    let mut best = (f64::NEG_INFINITY, 0u32);
    for subset in 1u32..(1 << k) {
        let value: f64 = (0..k)
            .filter(|i| subset >> i & 1 == 1)
            .map(|i| profile[i] - cost)
            .sum();
        if value > best.0 {
            best = (value, subset);
        }
    }
    (0..k).filter(|i| best.1 >> i & 1 == 1).collect()
}

#[test]
fn paper_union_example() {
    let tg = TopicSet::from_bits(&[0, 0, 1]);
    let th = TopicSet::from_bits(&[1, 0, 0]);
    assert_eq!(tg.union(&th), TopicSet::from_bits(&[1, 0, 1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn union_is_idempotent_and_absorbing(k in 1usize..=16, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = mask(&(0..k).map(|_| rng.random()).collect::<Vec<bool>>());
        let b = mask(&(0..k).map(|_| rng.random()).collect::<Vec<bool>>());
        let full = TopicSet::full(k);
        prop_assert_eq!(a.union(&a), a.clone());
        prop_assert_eq!(a.union(&full), full.clone());
        prop_assert_eq!(a.union(&TopicSet::empty(k)), a.clone());
        prop_assert_eq!(a.union(&b), b.union(&a));
        prop_assert!(a.is_subset(&a.union(&b)) && b.is_subset(&a.union(&b)));
        for i in 0..k {
            prop_assert_eq!(a.union(&b).contains(i), a.contains(i) || b.contains(i));
        }
    }
}

#[test]
fn thresholding_agrees_with_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut total) = (0, 0);
    for _ in 0..2000 {
        let k = rng.random_range(1..=12);
        let p = stochastic(&mut rng, k);
        let set = signature_set(&p);
        assert!(!set.is_empty());
        let fast: Vec<usize> = set.iter().collect();
        let slow = brute_force_signature(&p);
        total += 1;
        if fast == slow {
            agree += 1;
        } else {
            eprintln!("disagreement on {p:?}: {fast:?} vs {slow:?}");
        }
    }
    assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
}

fn random_classifier(seed: u64, k: usize, normalize: bool) -> ZeroShotClassifier {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tax = Taxonomy::from_groups(&[
        ("a", vec![("a0", true), ("a1", true), ("a2", true), ("au", false)]),
        ("b", vec![("b0", true), ("b1", true), ("bu", false)]),
    ])
    .unwrap();
    let labels: Vec<FineClassId> = tax.seen_classes().flat_map(|c| [c, c, c]).collect();
    let doc_topic = (0..labels.len()).map(|_| stochastic(&mut rng, k)).collect();
    let topic_word = (0..k).map(|_| stochastic(&mut rng, 8)).collect();
    let model = PlsaModel::from_parts(topic_word, doc_topic).unwrap();
    let options = ClassifierOptions { normalize_by_set_size: normalize, ..Default::default() };
    let mut clf = ZeroShotClassifier::from_seen(&model, &labels, &tax, options).unwrap();
    clf.infer_unseen_sets(&tax, &PairPolicy::Random { seed }).unwrap();
    for u in tax.unseen_classes() {
        let (g, h) = clf.pair_choice(u).unwrap();
        assert_eq!(tax.parent(g), tax.parent(u));
        assert_eq!(tax.parent(h), tax.parent(u));
        assert!(tax.is_seen(g) && tax.is_seen(h) && g != h);
        let union = clf.topic_set(g).unwrap().union(clf.topic_set(h).unwrap());
        assert_eq!(clf.topic_set(u).unwrap(), &union);
    }
    clf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_are_a_distribution_invariant_to_rescaling(
        seed in any::<u64>(), k in 2usize..10, normalize in any::<bool>(), scale in 0.01f64..100.0,
    ) {
        let clf = random_classifier(seed, k, normalize);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let theta = stochastic(&mut rng, k);
        let a = clf.score_mixture(&theta).unwrap();
        prop_assert_eq!(a.ranked.len(), 7);
        prop_assert!((a.ranked.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() <= 1e-9);
        let scaled: Vec<f64> = theta.iter().map(|t| t * scale).collect();
        let b = clf.score_mixture(&scaled).unwrap();
        prop_assert_eq!(a.predicted(), b.predicted());
        for ((ca, sa), (cb, sb)) in a.ranked.iter().zip(&b.ranked) {
            prop_assert_eq!(ca, cb);
            prop_assert!((sa - sb).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_choices_are_seeded(seed in any::<u64>()) {
        let a = random_classifier(seed, 6, false);
        let b = random_classifier(seed, 6, false);
        prop_assert_eq!(a.pair_choices(), b.pair_choices());
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
