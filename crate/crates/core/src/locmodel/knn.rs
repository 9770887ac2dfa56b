use ndarray::{Array2, ArrayView1};

use super::LocError;

/// Reference set for the nearest-neighbour baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnReference {
    features: Array2<f64>,
    labels: Vec<usize>,
}

impl KnnReference {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self, LocError> {
        if features.nrows() == 0 {
            return Err(LocError::BadReference("empty reference set".into()));
        }
        if features.nrows() != labels.len() {
            return Err(LocError::BadReference(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

fn sq_dist(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority label among the `k` nearest references by Euclidean distance.
/// Distance ties and vote ties both go to the smallest reference index.
pub fn knn_classify(query: &[f64], reference: &KnnReference, k: usize) -> Result<usize, LocError> {
    if k == 0 {
        return Err(LocError::BadReference("k must be at least 1".into()));
    }
    if k > reference.len() {
        return Err(LocError::KTooLarge {
            k,
            n: reference.len(),
        });
    }
    if query.len() != reference.dim() {
        return Err(LocError::BadReference(format!(
            "query has {} features, references {}",
            query.len(),
            reference.dim()
        )));
    }
    if k == 1 {
        let mut best = (f64::INFINITY, 0);
        for (r, row) in reference.features.rows().into_iter().enumerate() {
            let d = sq_dist(row, query);
            if d < best.0 {
                best = (d, r);
            }
        }
        return Ok(reference.labels[best.1]);
    }
    let mut dists: Vec<(f64, usize)> = reference
        .features
        .rows()
        .into_iter()
        .enumerate()
        .map(|(r, row)| (sq_dist(row, query), r))
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &dists[..k];
    // Winner: highest vote count, then the label whose first voter is nearest in index order.
    let mut best: Option<(usize, usize, usize)> = None; // (votes, first index, label)
    for &(_, r) in nearest {
        let label = reference.labels[r];
        let votes = nearest
            .iter()
            .filter(|(_, q)| reference.labels[*q] == label)
            .count();
        let first = nearest
            .iter()
            .filter(|(_, q)| reference.labels[*q] == label)
            .map(|(_, q)| *q)
            .min()
            .unwrap_or(r);
        let better = match best {
            None => true,
            Some((v, f, _)) => votes > v || (votes == v && first < f),
        };
        if better {
            best = Some((votes, first, label));
        }
    }
    Ok(best.map(|b| b.2).unwrap_or(reference.labels[nearest[0].1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn reference() -> KnnReference {
        KnnReference::new(
            array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]],
            vec![1, 2, 2, 3, 3],
        )
        .unwrap()
    }

    #[test]
    fn nearest_neighbour() {
        let r = reference();
        assert_eq!(knn_classify(&[0.0, 0.0], &r, 1).unwrap(), 1);
        assert_eq!(knn_classify(&[5.9, 5.1], &r, 1).unwrap(), 3);
        // Equidistant from references 0 and 1: smallest index wins.
        assert_eq!(knn_classify(&[0.5, 0.0], &r, 1).unwrap(), 1);
    }

    #[test]
    fn majority_and_ties() {
        let r = reference();
        assert_eq!(knn_classify(&[0.1, 0.1], &r, 3).unwrap(), 2);
        // Two labels with one vote each among k = 2: the smaller index (label 1) wins.
        assert_eq!(knn_classify(&[0.4, 0.0], &r, 2).unwrap(), 1);
        assert_eq!(knn_classify(&[5.5, 5.0], &r, 5).unwrap(), 2);
    }

    #[test]
    fn errors() {
        let r = reference();
        assert_eq!(
            knn_classify(&[0.0, 0.0], &r, 6),
            Err(LocError::KTooLarge { k: 6, n: 5 })
        );
        assert!(knn_classify(&[0.0], &r, 1).is_err());
        assert!(knn_classify(&[0.0, 0.0], &r, 0).is_err());
        assert!(KnnReference::new(Array2::zeros((0, 2)), vec![]).is_err());
        assert!(KnnReference::new(Array2::zeros((2, 2)), vec![1]).is_err());
    }
}
