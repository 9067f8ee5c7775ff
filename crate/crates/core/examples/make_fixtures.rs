//! Regenerate the files under `fixtures/`.
//!
//! cargo run -p storypoint-core --example make_fixtures -- fixtures

use std::path::PathBuf;

use storypoint_core::dataset::{item_text, save_project, DataFormat, Split};
use storypoint_core::features::{fit_hashed_tfidf, DEFAULT_DIM};
use storypoint_core::synthetic::{generate, standin_project, SyntheticSpec};

fn main() -> storypoint_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&out).expect("create output directory");

    let synthetic = generate(SyntheticSpec::default())?;
    let name = synthetic.dataset.name().to_string();
    save_project(&synthetic.dataset, out.join(format!("{name}.csv")), DataFormat::DelimitedTable)?;
    synthetic.embeddings.save(out.join(format!("{name}.embeddings.jsonl")))?;

    for (name, n, min, max, seed) in [("jirasoftware", 352, 1, 20, 352), ("usergrid", 482, 1, 8, 482)] {
        let ds = standin_project(name, n, min, max, seed)?;
        save_project(&ds, out.join(format!("{name}.csv")), DataFormat::DelimitedTable)?;
        let corpus: Vec<String> = ds.in_splits(&[Split::Train, Split::Validation]).map(item_text).collect();
        let tfidf = fit_hashed_tfidf(&corpus, DEFAULT_DIM, true)?;
        let emb = tfidf.embed_all(ds.items().iter().map(|i| (i.id.as_str(), item_text(i))))?;
        emb.save(out.join(format!("{name}.embeddings.jsonl")))?;
    }
    Ok(())
}
