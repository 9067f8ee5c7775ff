use std::path::{Path, PathBuf};

use storypoint_core::dataset::{load_project, summarize, DataFormat, StoryPoint};
use storypoint_core::features::load_embeddings;
use storypoint_core::reference::project_shape;
use storypoint_core::synthetic::{generate, standin_project, SyntheticSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn standins_match_published_shapes() {
    for name in ["jirasoftware", "usergrid"] {
        let ds = load_project(fixture(&format!("{name}.csv")), DataFormat::DelimitedTable).unwrap();
        assert_eq!(ds.name(), name);
        let s = summarize(&ds).unwrap();
        let shape = project_shape(name).unwrap();
        assert_eq!(s.n, shape.size);
        assert_eq!(s.min_sp, StoryPoint::integer(shape.min_sp));
        assert_eq!(s.max_sp, StoryPoint::integer(shape.max_sp));
        assert_eq!(s.train + s.validation + s.test, s.n);
    }
}

#[test]
fn shipped_files_match_their_generators() {
    let synthetic = generate(SyntheticSpec::default()).unwrap();
    let ds = load_project(fixture("synthetic-500.csv"), DataFormat::DelimitedTable).unwrap();
    assert_eq!(ds, synthetic.dataset);
    let emb = load_embeddings(fixture("synthetic-500.embeddings.jsonl")).unwrap();
    assert_eq!(emb, synthetic.embeddings);

    let ds = load_project(fixture("usergrid.csv"), DataFormat::DelimitedTable).unwrap();
    assert_eq!(ds, standin_project("usergrid", 482, 1, 8, 482).unwrap());
    let emb = load_embeddings(fixture("jirasoftware.embeddings.jsonl")).unwrap();
    assert_eq!(emb.len(), 352);
}
