//! Deterministic per-class semantic attribute labels.
//!
//! Six components per class: carries amplitude information, carries
//! phase information, constant envelope, quadrature grid, normalized
//! modulation order log2(M)/6, and a high-order flag (M >= 16). The
//! normalized order separates 16QAM from 64QAM.

use crate::error::{Error, Result};
use crate::signal::ModulationScheme;

pub const ATTR_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeVector(pub [f64; ATTR_DIM]);

impl AttributeVector {
    pub fn values(&self) -> &[f64; ATTR_DIM] {
        &self.0
    }
}

/// K x 6 matrix of class attribute labels, rows in dataset class order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAttributeMatrix {
    rows: Vec<AttributeVector>,
}

pub fn attribute_label(scheme: ModulationScheme) -> AttributeVector {
    let order = scheme.bits_per_symbol() as f64;
    let m = 1usize << scheme.bits_per_symbol();
    let is_qam = matches!(scheme, ModulationScheme::Qam16 | ModulationScheme::Qam64);
    AttributeVector([
        if is_qam { 1.0 } else { 0.0 },  // carries_amplitude_info
        1.0,                             // carries_phase_info
        if is_qam { 0.0 } else { 1.0 },  // constant_envelope
        if is_qam { 1.0 } else { 0.0 },  // is_quadrature_grid
        order / 6.0,                     // normalized_order
        if m >= 16 { 1.0 } else { 0.0 }, // high_order_flag
    ])
}

pub fn class_attribute_matrix(schemes: &[ModulationScheme]) -> Result<ClassAttributeMatrix> {
    if schemes.is_empty() {
        return Err(Error::Invalid("empty scheme list".into()));
    }
    let rows: Vec<AttributeVector> = schemes.iter().map(|&s| attribute_label(s)).collect();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if rows[i] == rows[j] {
                return Err(Error::DegenerateTaxonomy(i, j));
            }
        }
    }
    Ok(ClassAttributeMatrix { rows })
}

impl ClassAttributeMatrix {
    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, class: usize) -> &AttributeVector {
        &self.rows[class]
    }

    pub fn rows(&self) -> &[AttributeVector] {
        &self.rows
    }

    /// Taxonomy CSV for documentation and audit.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from(
            "class_name,carries_amplitude_info,carries_phase_info,constant_envelope,is_quadrature_grid,normalized_order,high_order_flag\n",
        );
        for (name, row) in class_names.iter().zip(&self.rows) {
            out.push_str(name);
            for v in row.values() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModulationScheme::*;

    #[test]
    fn taxonomy_rows_match_definitions() {
        assert_eq!(
            attribute_label(Bpsk).0,
            [0.0, 1.0, 1.0, 0.0, 1.0 / 6.0, 0.0]
        );
        assert_eq!(
            attribute_label(Qam16).0,
            [1.0, 1.0, 0.0, 1.0, 4.0 / 6.0, 1.0]
        );
        assert_eq!(attribute_label(Qam64).0, [1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn default_classes_give_distinct_rows() {
        let cam = class_attribute_matrix(&[Bpsk, Qpsk, Qam16, Qam64]).unwrap();
        assert_eq!(cam.num_classes(), 4);
        let mut min_dist = f64::INFINITY;
        for i in 0..4 {
            for j in i + 1..4 {
                let d: f64 = cam
                    .row(i)
                    .values()
                    .iter()
                    .zip(cam.row(j).values())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                min_dist = min_dist.min(d.sqrt());
            }
        }
        assert!(min_dist > 0.0);
        // 16QAM and 64QAM must differ (in normalized_order)
        assert_ne!(cam.row(2), cam.row(3));
    }

    #[test]
    fn single_class_ok_duplicates_rejected() {
        assert_eq!(class_attribute_matrix(&[Qpsk]).unwrap().num_classes(), 1);
        assert!(matches!(
            class_attribute_matrix(&[Qpsk, Qpsk]),
            Err(Error::DegenerateTaxonomy(0, 1))
        ));
        assert!(class_attribute_matrix(&[]).is_err());
    }

    #[test]
    fn matrix_is_constant_for_same_schemes() {
        let a = class_attribute_matrix(&[Bpsk, Qam64]).unwrap();
        let b = class_attribute_matrix(&[Bpsk, Qam64]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn components_in_unit_interval() {
        for s in [Bpsk, Qpsk, Psk8, Qam16, Qam64] {
            for &v in attribute_label(s).values() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
