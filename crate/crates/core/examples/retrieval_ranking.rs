//! Cross-modal ranking by cosine similarity and average precision on
//! hand-written embeddings, including exact ties.

use cobra::eval::{
    average_precision, average_precision_at, cosine_similarity, rank_gallery, retrieval_from_embeddings,
    RetrievalOptions, ZeroRelevant,
};
use cobra::Matrix;

fn main() -> cobra::Result<()> {
    let gallery = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]];
    let query = [3.0, 0.0];
    for (i, g) in gallery.iter().enumerate() {
        println!("gallery {i} {g:?} cos={:.4}", cosine_similarity(&query, g));
    }
    // Items 0 and 2 tie exactly and stay in index order.
    let order = rank_gallery(&query, &gallery);
    println!("ranking {order:?}");

    let labels = [0, 1, 1, 0, 1];
    let relevance: Vec<bool> = order.iter().map(|&j| labels[j] == 0).collect();
    println!("relevance {relevance:?}");
    println!("AP={:.5} AP@2={:.5}", average_precision(&relevance).unwrap(), average_precision_at(&relevance, 2).unwrap());

    let images = Matrix::from_rows(&[&[1.0, 0.1][..], &[0.1, 1.0], &[0.0, 0.0]])?;
    let texts = Matrix::from_rows(&[&[0.9, 0.0][..], &[0.0, 0.8], &[0.5, 0.5]])?;
    let (li, lt) = ([0, 1, 2], [0, 1, 3]);
    for policy in [ZeroRelevant::Exclude, ZeroRelevant::Zero] {
        let opts = RetrievalOptions { zero_relevant: policy, map_at: None };
        let report = retrieval_from_embeddings(&images, &li, &texts, &lt, &opts)?;
        println!("{policy:?}:");
        for line in report.records() {
            println!("  {line}");
        }
    }
    Ok(())
}
