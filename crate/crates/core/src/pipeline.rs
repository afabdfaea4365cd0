//! Turns dataset views into model inputs with every statistic fitted on the
//! training side only: z-scoring for dense views, vocabulary and idf for
//! TF-IDF n-grams computed from claim text.

use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};

use crate::corpus::Dataset;
use crate::error::{Result, VeriflowError};
use crate::textfeat::{fit_tfidf, tfidf_vector, TfidfModel};

/// Name under which TF-IDF n-grams are requested in configs.
pub const TFIDF: &str = "tfidf";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ViewSource {
    /// A precomputed view stored in the dataset.
    Dense(String),
    /// TF-IDF word 1–4-grams over claim text.
    Tfidf,
}

impl ViewSource {
    pub fn parse(name: &str) -> ViewSource {
        if name == TFIDF {
            ViewSource::Tfidf
        } else {
            ViewSource::Dense(name.to_string())
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ViewSource::Dense(name) => name,
            ViewSource::Tfidf => TFIDF,
        }
    }
}

impl fmt::Display for ViewSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-column z-scoring; constant columns are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Standardizer> {
        if x.nrows() == 0 {
            return Err(VeriflowError::Empty("standardizer fit set".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty rows");
        let var = x.var_axis(Axis(0), 0.0);
        Ok(Standardizer {
            mean: mean.to_vec(),
            scale: var
                .iter()
                .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
                .collect(),
        })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.outer_iter_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    Dense {
        name: String,
        standardizer: Option<Standardizer>,
    },
    Tfidf(TfidfModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPipeline {
    pub sources: Vec<ViewSource>,
    pub standardize: bool,
}

impl ViewPipeline {
    pub fn new(sources: Vec<ViewSource>) -> Self {
        ViewPipeline {
            sources,
            standardize: true,
        }
    }

    pub fn fit<S: AsRef<str>>(&self, dataset: &Dataset, train_ids: &[S]) -> Result<FittedPipeline> {
        if self.sources.is_empty() {
            return Err(VeriflowError::Empty("view list".into()));
        }
        let parts = self
            .sources
            .iter()
            .map(|source| match source {
                ViewSource::Tfidf => Ok(Fitted::Tfidf(fit_tfidf(&dataset.texts(train_ids)?)?)),
                ViewSource::Dense(name) => {
                    let view = dataset.view(name)?;
                    let standardizer = if self.standardize {
                        Some(Standardizer::fit(view.matrix(train_ids)?.view())?)
                    } else {
                        None
                    };
                    Ok(Fitted::Dense {
                        name: name.clone(),
                        standardizer,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FittedPipeline { parts })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    parts: Vec<Fitted>,
}

impl FittedPipeline {
    pub fn names(&self) -> Vec<String> {
        self.parts
            .iter()
            .map(|p| match p {
                Fitted::Dense { name, .. } => name.clone(),
                Fitted::Tfidf(_) => TFIDF.to_string(),
            })
            .collect()
    }

    pub fn tfidf_model(&self) -> Option<&TfidfModel> {
        self.parts.iter().find_map(|p| match p {
            Fitted::Tfidf(m) => Some(m),
            _ => None,
        })
    }

    /// One `ids.len() × dim` matrix per source, in source order.
    pub fn transform<S: AsRef<str>>(&self, dataset: &Dataset, ids: &[S]) -> Result<Vec<Array2<f64>>> {
        self.parts
            .iter()
            .map(|part| match part {
                Fitted::Dense { name, standardizer } => {
                    let raw = dataset.view(name)?.matrix(ids)?;
                    Ok(match standardizer {
                        Some(s) => s.transform(raw.view()),
                        None => raw,
                    })
                }
                Fitted::Tfidf(model) => {
                    let mut out = Array2::zeros((ids.len(), model.dim()));
                    for (i, text) in dataset.texts(ids)?.into_iter().enumerate() {
                        for (j, v) in tfidf_vector(model, text).entries {
                            out[[i, j]] = v;
                        }
                    }
                    Ok(out)
                }
            })
            .collect()
    }

    /// All sources side by side in one matrix.
    pub fn transform_concat<S: AsRef<str>>(&self, dataset: &Dataset, ids: &[S]) -> Result<Array2<f64>> {
        let blocks = self.transform(dataset, ids)?;
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        ndarray::concatenate(Axis(1), &views).map_err(|e| VeriflowError::invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_multiview, Split, SynthView};
    use ndarray::array;

    #[test]
    fn standardizer_centers_and_scales() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        let z = s.transform(x.view());
        assert_eq!(z, array![[-1.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn fitting_ignores_held_out_rows() {
        let ds = synth_multiview(60, 3, &[SynthView::new("a", 2, 1.0)], 4).unwrap();
        let train = ds.split_ids(Split::Train);
        let test = ds.split_ids(Split::Test);
        let pipeline = ViewPipeline::new(vec![ViewSource::parse("a"), ViewSource::parse("tfidf")]);
        let fitted = pipeline.fit(&ds, &train).unwrap();

        // Corrupting held-out claims must not change the fitted statistics.
        let mut poisoned = ds.view("a").unwrap().clone();
        for id in &test {
            poisoned.rows.insert(id.clone(), vec![1e6, -1e6]);
        }
        let ds2 = ds.with_view(poisoned);
        assert_eq!(pipeline.fit(&ds2, &train).unwrap(), fitted);

        let blocks = fitted.transform(&ds, &test).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].dim(), (test.len(), 2));
        assert_eq!(blocks[1].ncols(), fitted.tfidf_model().unwrap().dim());
        let joined = fitted.transform_concat(&ds, &test).unwrap();
        assert_eq!(joined.ncols(), 2 + blocks[1].ncols());
    }
}
