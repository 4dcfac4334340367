//! Lexical search over a handful of documents.

use hopsynth::retrieval::Bm25Index;

fn main() {
    let docs = [
        ("d1", "Arlen Vale is a town on the river Osk. The mill was founded in 1871."),
        ("d2", "The river Osk drains three valleys and floods every spring."),
        ("d3", "Mira Holt founded the Osk Valley Mill and later moved abroad."),
        ("d4", "Grain prices fell sharply after the railway reached the coast."),
    ];
    let index = Bm25Index::build(docs.iter().copied());
    println!("{} docs, idf(osk) = {:.3}, idf(railway) = {:.3}", index.len(), index.idf("osk"), index.idf("railway"));

    for query in ["who founded the mill", "river osk floods"] {
        println!("\n{query}");
        for e in index.search(query, 3).entries {
            println!("  {:<3} {:.4}", e.doc_id, e.score);
        }
    }
}
