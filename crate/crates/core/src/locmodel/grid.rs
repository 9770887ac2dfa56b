use super::LocError;
use crate::dsp::Domain;
use crate::neural::{Head, NetSpec};
use crate::Point;

pub const GRID_HIDDEN: [usize; 4] = [400, 300, 200, 100];

/// An `n x n` partition of the plate into equal zones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub plate_width_cm: f64,
    pub plate_height_cm: f64,
}

impl GridSpec {
    pub fn new(n: usize, plate_width_cm: f64, plate_height_cm: f64) -> Result<Self, LocError> {
        if !(2..=10).contains(&n) {
            return Err(LocError::BadResolution(n));
        }
        if !(plate_width_cm > 0.0
            && plate_height_cm > 0.0
            && plate_width_cm.is_finite()
            && plate_height_cm.is_finite())
        {
            return Err(LocError::BadPlate(plate_width_cm, plate_height_cm));
        }
        Ok(Self {
            n,
            plate_width_cm,
            plate_height_cm,
        })
    }

    /// Grid over the default 20 x 20 cm plate.
    pub fn square(n: usize) -> Result<Self, LocError> {
        Self::new(n, 20.0, 20.0)
    }

    pub fn classes(&self) -> usize {
        self.n * self.n
    }

    pub fn zone_width(&self) -> f64 {
        self.plate_width_cm / self.n as f64
    }

    pub fn zone_height(&self) -> f64 {
        self.plate_height_cm / self.n as f64
    }

    /// Geometric area of one zone in cm².
    pub fn class_area_cm2(&self) -> f64 {
        self.zone_width() * self.zone_height()
    }

    /// Largest decoding error of a correct classification: half the zone diagonal.
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.zone_width().hypot(self.zone_height())
    }

    pub fn zones(&self) -> impl Iterator<Item = ZoneIndex> + '_ {
        (0..self.classes()).map(|f| ZoneIndex::from_flat(f, self.n))
    }
}

/// Zone coordinates: `i` is the row counted upward from y = 0, `j` the
/// column counted rightward from x = 0, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZoneIndex {
    pub i: usize,
    pub j: usize,
}

impl ZoneIndex {
    pub fn new(i: usize, j: usize, n: usize) -> Result<Self, LocError> {
        if (1..=n).contains(&i) && (1..=n).contains(&j) {
            Ok(Self { i, j })
        } else {
            Err(LocError::BadZone { i, j, n })
        }
    }

    pub fn flat(&self, n: usize) -> usize {
        (self.i - 1) * n + (self.j - 1)
    }

    pub fn from_flat(flat: usize, n: usize) -> Self {
        Self {
            i: flat / n + 1,
            j: flat % n + 1,
        }
    }
}

fn axis_index(v: f64, side: f64, n: usize) -> usize {
    ((v / side).floor() as isize + 1).clamp(1, n as isize) as usize
}

/// Zone containing `t`. Interior boundaries belong to the higher zone; the
/// far plate edges belong to the last zone.
pub fn zone_of(t: Point, grid: &GridSpec) -> Result<ZoneIndex, LocError> {
    let [x, y] = t;
    let inside =
        (0.0..=grid.plate_width_cm).contains(&x) && (0.0..=grid.plate_height_cm).contains(&y);
    if !inside {
        return Err(LocError::OutsidePlate { x, y });
    }
    Ok(ZoneIndex {
        i: axis_index(y, grid.zone_height(), grid.n),
        j: axis_index(x, grid.zone_width(), grid.n),
    })
}

pub fn center_of_mass(z: ZoneIndex, grid: &GridSpec) -> Point {
    [
        (z.j as f64 - 0.5) * grid.zone_width(),
        (z.i as f64 - 0.5) * grid.zone_height(),
    ]
}

/// Argmax over `scores` (lowest flat index wins ties), decoded to the zone centre.
pub fn decode_classification(scores: &[f64], grid: &GridSpec) -> Result<Point, LocError> {
    if scores.len() != grid.classes() {
        return Err(LocError::BadScores(format!(
            "{} scores for {} zones",
            scores.len(),
            grid.classes()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(LocError::BadScores(format!(
            "score {bad} is not a nonnegative number"
        )));
    }
    let best = argmax(scores);
    Ok(center_of_mass(ZoneIndex::from_flat(best, grid.n), grid))
}

/// Index of the largest value, first occurrence on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in v.iter().enumerate().skip(1) {
        if s > v[best] {
            best = k;
        }
    }
    best
}

pub fn build_grid_classifier(grid: &GridSpec, domain: Domain) -> NetSpec {
    NetSpec::new(
        domain.feature_len(),
        GRID_HIDDEN.to_vec(),
        grid.classes(),
        Head::SoftmaxClassifier,
    )
}

pub fn build_regressor(domain: Domain) -> NetSpec {
    NetSpec::new(
        domain.feature_len(),
        GRID_HIDDEN.to_vec(),
        2,
        Head::LinearRegressor,
    )
}
