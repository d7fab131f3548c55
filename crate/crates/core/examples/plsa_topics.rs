//! Fit pLSA on a corpus drawn from known topics and compare the recovered
//! topics with the truth; then fold in a held-out document.

use hic_zeroshot::data::{generate_topic_corpus, TopicCorpusSpec};
use hic_zeroshot::plsa::{self, Corpus, EmConfig};

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn main() -> hic_zeroshot::Result<()> {
    let spec = TopicCorpusSpec {
        rng_seed: 11,
        ..Default::default()
    };
    let truth = generate_topic_corpus(&spec)?;
    let corpus = Corpus::from_histograms(&truth.docs)?;
    let cfg = EmConfig::default();
    let model = plsa::fit(&corpus, spec.num_topics, &cfg)?;

    let trace = model.loglik_trace();
    println!(
        "{} documents, {} words: {} EM iterations, log-likelihood {:.1} -> {:.1}",
        corpus.len(),
        corpus.vocab_size(),
        model.iterations(),
        trace[0],
        trace[trace.len() - 1]
    );
    for (z, t) in truth.topic_word.iter().enumerate() {
        let (best, dist) = (0..model.num_topics())
            .map(|k| (k, l1(t, model.topic_word(k))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        println!("true topic {z} ~ fitted topic {best} (L1 {dist:.3})");
    }

    let theta = model.fold_in(&truth.docs[0], &cfg)?;
    let shown: Vec<String> = theta.iter().map(|p| format!("{p:.3}")).collect();
    let real: Vec<String> = truth.doc_topic[0].iter().map(|p| format!("{p:.3}")).collect();
    println!("fold-in of document 0: [{}]", shown.join(", "));
    println!("generating mixture:    [{}]", real.join(", "));
    Ok(())
}
