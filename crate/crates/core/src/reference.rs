//! Published per-project numbers, bundled for side-by-side comparison in
//! reports. Nothing here feeds back into training or evaluation.

use std::sync::OnceLock;

use serde::Deserialize;

/// Average Spearman of comparative learning without validation (k = 1) over
/// the 16 published projects.
pub const PUBLISHED_NOVAL_AVERAGE_SPEARMAN: f64 = 0.34;
/// Acceptance band around [`PUBLISHED_NOVAL_AVERAGE_SPEARMAN`].
pub const REPLICATION_BAND: f64 = 0.05;

pub const AVERAGE_ROW: &str = "Average";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ProjectShape {
    pub project: String,
    pub size: usize,
    pub min_sp: i64,
    pub max_sp: i64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PublishedResult {
    pub project: String,
    /// `regression`, `svm-comparative`, `comparative-noval`,
    /// `comparative-val`, `fasttext-svm` or `gpt2sp`.
    pub model: String,
    pub pearson: f64,
    pub spearman: f64,
    pub mae: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct Published {
    projects: Vec<ProjectShape>,
    results: Vec<PublishedResult>,
}

fn published() -> &'static Published {
    static DATA: OnceLock<Published> = OnceLock::new();
    DATA.get_or_init(|| {
        serde_json::from_str(include_str!("../data/published.json")).expect("bundled reference data is valid JSON")
    })
}

/// Size and story point range of every published project.
pub fn project_shapes() -> &'static [ProjectShape] {
    &published().projects
}

pub fn project_shape(project: &str) -> Option<&'static ProjectShape> {
    project_shapes().iter().find(|p| p.project == project)
}

/// Published numbers for a project (or [`AVERAGE_ROW`]) and model name.
pub fn lookup(project: &str, model: &str) -> Option<&'static PublishedResult> {
    published().results.iter().find(|r| r.project == project && r.model == model)
}

pub fn results() -> &'static [PublishedResult] {
    &published().results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_cover_all_projects() {
        assert_eq!(project_shapes().len(), 16);
        let jira = project_shape("jirasoftware").unwrap();
        assert_eq!((jira.size, jira.min_sp, jira.max_sp), (352, 1, 20));
        let usergrid = project_shape("usergrid").unwrap();
        assert_eq!((usergrid.size, usergrid.min_sp, usergrid.max_sp), (482, 1, 8));
        assert_eq!(project_shapes().iter().map(|p| p.size).sum::<usize>(), 23313);
    }

    #[test]
    fn spot_values() {
        let r = lookup("appceleratorstudio", "regression").unwrap();
        assert_eq!((r.pearson, r.spearman, r.mae), (0.3254, 0.3037, Some(3.5821)));
        let r = lookup("mulestudio", "comparative-noval").unwrap();
        assert_eq!((r.pearson, r.spearman, r.mae), (0.2265, 0.2148, None));
        let r = lookup(AVERAGE_ROW, "comparative-noval").unwrap();
        assert_eq!((r.pearson, r.spearman), (0.3337, 0.3403));
        assert!(lookup("nope", "regression").is_none());
    }

    #[test]
    fn averages_match_their_columns() {
        for model in ["regression", "svm-comparative", "comparative-noval", "comparative-val", "gpt2sp"] {
            let rows: Vec<_> = results()
                .iter()
                .filter(|r| r.model == model && r.project != AVERAGE_ROW)
                .collect();
            assert_eq!(rows.len(), 16);
            let mean = rows.iter().map(|r| r.spearman).sum::<f64>() / 16.0;
            let published = lookup(AVERAGE_ROW, model).unwrap().spearman;
            assert!((mean - published).abs() < 1.5e-4, "{model}: {mean} vs {published}");
        }
    }
}
