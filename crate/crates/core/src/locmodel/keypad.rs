use super::LocError;
use crate::dsp::Domain;
use crate::neural::{Head, NetSpec};
use crate::Point;

/// Key labels in class order; class `k` (1-based) is `KEY_LABELS[k - 1]`.
pub const KEY_LABELS: [&str; 12] = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "*", "0", "#"];
pub const KEYPAD_CLASSES: usize = 13;
/// The background class "L" covering everything outside the keys.
pub const BACKGROUND_CLASS: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct Key {
    pub label: String,
    pub center: Point,
    pub half_size_cm: f64,
}

impl Key {
    /// Inclusive square containment.
    pub fn contains(&self, t: Point) -> bool {
        (t[0] - self.center[0]).abs() <= self.half_size_cm
            && (t[1] - self.center[1]).abs() <= self.half_size_cm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypadLayout {
    pub keys: Vec<Key>,
    pub plate_width_cm: f64,
    pub plate_height_cm: f64,
}

impl Default for KeypadLayout {
    /// 3 x 4 block of 2.5 cm keys on a 4 cm pitch, centred on the 20 x 20 cm
    /// plate, with the "1 2 3" row on top.
    fn default() -> Self {
        let keys = KEY_LABELS
            .iter()
            .enumerate()
            .map(|(k, label)| {
                let (row, col) = ((k / 3) as f64, (k % 3) as f64);
                Key {
                    label: (*label).to_string(),
                    center: [10.0 + (col - 1.0) * 4.0, 10.0 + (1.5 - row) * 4.0],
                    half_size_cm: 1.25,
                }
            })
            .collect();
        Self {
            keys,
            plate_width_cm: 20.0,
            plate_height_cm: 20.0,
        }
    }
}

impl KeypadLayout {
    pub fn validate(&self) -> Result<(), LocError> {
        let bad = |m: String| Err(LocError::BadLayout(m));
        if self.keys.len() != KEY_LABELS.len() {
            return bad(format!(
                "{} keys, expected {}",
                self.keys.len(),
                KEY_LABELS.len()
            ));
        }
        for (key, want) in self.keys.iter().zip(KEY_LABELS) {
            if key.label != want {
                return bad(format!(
                    "key '{}' found where '{want}' was expected",
                    key.label
                ));
            }
            let [x, y] = key.center;
            let h = key.half_size_cm;
            if !(h > 0.0 && x.is_finite() && y.is_finite() && h.is_finite()) {
                return bad(format!("key '{}' has invalid geometry", key.label));
            }
            if x - h < 0.0
                || y - h < 0.0
                || x + h > self.plate_width_cm
                || y + h > self.plate_height_cm
            {
                return bad(format!("key '{}' extends outside the plate", key.label));
            }
        }
        for (a, ka) in self.keys.iter().enumerate() {
            for kb in &self.keys[a + 1..] {
                let reach = ka.half_size_cm + kb.half_size_cm;
                if (ka.center[0] - kb.center[0]).abs() <= reach
                    && (ka.center[1] - kb.center[1]).abs() <= reach
                {
                    return bad(format!("keys '{}' and '{}' overlap", ka.label, kb.label));
                }
            }
        }
        Ok(())
    }

    pub fn key(&self, label: &str) -> Option<&Key> {
        self.keys.iter().find(|k| k.label == label)
    }

    /// Human-readable name of a class index 1..=13.
    pub fn class_name(class: usize) -> &'static str {
        match class {
            1..=12 => KEY_LABELS[class - 1],
            _ => "L",
        }
    }
}

/// Class 1..=12 for a touch on a key (edges inclusive), 13 otherwise.
pub fn keypad_label(t: Point, layout: &KeypadLayout) -> Result<usize, LocError> {
    let [x, y] = t;
    if !((0.0..=layout.plate_width_cm).contains(&x) && (0.0..=layout.plate_height_cm).contains(&y))
    {
        return Err(LocError::OutsidePlate { x, y });
    }
    Ok(layout
        .keys
        .iter()
        .position(|k| k.contains(t))
        .map_or(BACKGROUND_CLASS, |k| k + 1))
}

pub fn build_keypad_classifier(layout: &KeypadLayout) -> Result<NetSpec, LocError> {
    layout.validate()?;
    Ok(NetSpec::new(
        Domain::Frequency.feature_len(),
        vec![100, 50],
        KEYPAD_CLASSES,
        Head::SoftmaxClassifier,
    ))
}
