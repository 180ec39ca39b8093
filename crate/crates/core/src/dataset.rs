//! Expression matrices and the preprocessing transforms applied before
//! training: hypervariable-gene screening by coefficient of variation and the
//! zero-negation / truncation pair.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math;

/// Default number of hypervariable genes kept.
pub const DEFAULT_TOP_K: usize = 2000;
/// Default replacement value for exact zeros.
pub const DEFAULT_NEGATION: f64 = -10.0;

/// A cells × genes matrix, row-major (one row per cell).
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    n_cells: usize,
    n_genes: usize,
    values: Vec<f64>,
    gene_names: Vec<String>,
    cell_ids: Option<Vec<String>>,
}

impl ExpressionMatrix {
    /// Checks dimensions, finiteness and gene-name uniqueness. Negative values
    /// are allowed; use [`ExpressionMatrix::new_raw`] for measured data.
    pub fn new(
        n_cells: usize,
        values: Vec<f64>,
        gene_names: Vec<String>,
        cell_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n_genes = gene_names.len();
        if n_cells == 0 || n_genes == 0 {
            return Err(Error::EmptyMatrix);
        }
        if values.len() != n_cells * n_genes {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: n_cells * n_genes,
            });
        }
        if let Some(ids) = &cell_ids {
            if ids.len() != n_cells {
                return Err(Error::DimensionMismatch {
                    left: ids.len(),
                    right: n_cells,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for name in &gene_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateGene(name.clone()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "expression matrix" });
        }
        Ok(ExpressionMatrix {
            n_cells,
            n_genes,
            values,
            gene_names,
            cell_ids,
        })
    }

    /// Like [`ExpressionMatrix::new`] but additionally requires every value to
    /// be `>= 0`.
    pub fn new_raw(
        n_cells: usize,
        values: Vec<f64>,
        gene_names: Vec<String>,
        cell_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let m = Self::new(n_cells, values, gene_names, cell_ids)?;
        m.check_raw()?;
        Ok(m)
    }

    fn check_raw(&self) -> Result<()> {
        match self.first_negative() {
            Some((row, col, value)) => Err(Error::NegativeValue { row, col, value }),
            None => Ok(()),
        }
    }

    fn first_negative(&self) -> Option<(usize, usize, f64)> {
        self.values
            .iter()
            .position(|&v| v < 0.0)
            .map(|i| (i / self.n_genes, i % self.n_genes, self.values[i]))
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn cell_ids(&self) -> Option<&[String]> {
        self.cell_ids.as_deref()
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_genes..(cell + 1) * self.n_genes]
    }

    pub fn get(&self, cell: usize, gene: usize) -> f64 {
        self.values[cell * self.n_genes + gene]
    }

    /// Values of one gene across all cells.
    pub fn column(&self, gene: usize) -> Vec<f64> {
        (0..self.n_cells).map(|c| self.get(c, gene)).collect()
    }

    pub fn gene_index(&self, name: &str) -> Option<usize> {
        self.gene_names.iter().position(|g| g == name)
    }

    /// A new matrix holding the given gene columns, in the given order.
    pub fn select_genes(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_cells * indices.len());
        for c in 0..self.n_cells {
            let row = self.row(c);
            values.extend(indices.iter().map(|&g| row[g]));
        }
        let names = indices.iter().map(|&g| self.gene_names[g].clone()).collect();
        Self::new(self.n_cells, values, names, self.cell_ids.clone())
    }

    /// Reorders columns to follow `names`; every name must be present.
    pub fn select_by_name(&self, names: &[String]) -> Result<Self> {
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            idx.push(
                self.gene_index(n)
                    .ok_or_else(|| Error::InvalidConfig(alloc::format!("gene `{n}` not found")))?,
            );
        }
        self.select_genes(&idx)
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_cells(&self, start: usize, end: usize) -> Result<Self> {
        let values = self.values[start * self.n_genes..end * self.n_genes].to_vec();
        let ids = self.cell_ids.as_ref().map(|ids| ids[start..end].to_vec());
        Self::new(end - start, values, self.gene_names.clone(), ids)
    }

    /// Same labels, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_cells,
            values,
            self.gene_names.clone(),
            self.cell_ids.clone(),
        )
    }
}

/// Hypervariable-gene selection and zero-negation settings.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreprocessSpec {
    pub top_k: usize,
    /// Replacement for exact zeros; always negative.
    pub negation: f64,
    /// Indices into the source matrix, best-ranked first.
    pub selected_gene_indices: Vec<usize>,
    pub selected_gene_names: Vec<String>,
}

/// Outcome of [`select_hypervariable`].
#[derive(Clone, Debug)]
pub struct Selection {
    pub spec: PreprocessSpec,
    pub matrix: ExpressionMatrix,
    /// `cv` of each kept gene, in output column order.
    pub cvs: Vec<f64>,
    /// Names of zero-mean genes that could not be ranked.
    pub skipped: Vec<String>,
}

/// `sd / mean` with the population standard deviation.
pub fn coefficient_of_variation(column: &[f64]) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::ZeroMeanGene);
    }
    let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(math::sqrt(var) / mean)
}

/// Orders by descending cv, then ascending gene name.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Keeps the `top_k` genes with the largest coefficient of variation. Ties go
/// to the lexicographically smaller gene name; zero-mean genes are skipped.
/// Output columns follow the ranking.
pub fn select_hypervariable(
    matrix: &ExpressionMatrix,
    top_k: usize,
    negation: f64,
) -> Result<Selection> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    if negation >= 0.0 || negation.is_nan() {
        return Err(Error::InvalidNegation(negation));
    }
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(matrix.n_genes());
    let mut skipped = Vec::new();
    for g in 0..matrix.n_genes() {
        match coefficient_of_variation(&matrix.column(g)) {
            Ok(cv) => ranked.push((cv, g)),
            Err(Error::ZeroMeanGene) => skipped.push(matrix.gene_names()[g].clone()),
            Err(e) => return Err(e),
        }
    }
    if ranked.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let names = matrix.gene_names();
    ranked.sort_by(|a, b| rank_order((a.0, &names[a.1]), (b.0, &names[b.1])));
    ranked.truncate(top_k);
    let indices: Vec<usize> = ranked.iter().map(|&(_, g)| g).collect();
    let reduced = matrix.select_genes(&indices)?;
    Ok(Selection {
        spec: PreprocessSpec {
            top_k,
            negation,
            selected_gene_names: reduced.gene_names().to_vec(),
            selected_gene_indices: indices,
        },
        cvs: ranked.iter().map(|&(cv, _)| cv).collect(),
        matrix: reduced,
        skipped,
    })
}

/// Replaces exact zeros by `negation`. Positive values pass through.
pub fn zero_negate(matrix: &ExpressionMatrix, negation: f64) -> Result<ExpressionMatrix> {
    if negation >= 0.0 || negation.is_nan() {
        return Err(Error::InvalidNegation(negation));
    }
    if let Some((row, col, _)) = matrix.first_negative() {
        return Err(Error::NotRaw { row, col });
    }
    let values = matrix
        .values()
        .iter()
        .map(|&v| if v == 0.0 { negation } else { v })
        .collect();
    matrix.with_values(values)
}

/// Sets every negative value to `0.0`.
pub fn truncate_negatives(matrix: &ExpressionMatrix) -> ExpressionMatrix {
    let mut out = matrix.clone();
    truncate_in_place(&mut out.values);
    out
}

pub(crate) fn truncate_in_place(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
