use std::collections::BTreeMap;
use std::path::Path;

use super::{TuningParams, MAX_TUNING_VALUE};
use crate::{Error, Result};

/// Candidate values for every tuning parameter, in the tuning's parameter
/// order. Each list is nonempty, strictly increasing and made of powers of two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBounds {
    names: Vec<&'static str>,
    lists: Vec<Vec<u32>>,
}

impl ParamBounds {
    pub fn new<T: TuningParams>(lists: Vec<Vec<u32>>) -> Result<Self> {
        if lists.len() != T::NAMES.len() {
            return Err(Error::invalid(
                "bounds",
                format!("expected {} parameter lists, got {}", T::NAMES.len(), lists.len()),
            ));
        }
        for (name, list) in T::NAMES.iter().zip(&lists) {
            check_list(name, list)?;
        }
        Ok(ParamBounds { names: T::NAMES.to_vec(), lists })
    }

    /// Powers of two in `[lo, hi]` for every parameter.
    pub fn pow2<T: TuningParams>(lo: u32, hi: u32) -> Result<Self> {
        let list: Vec<u32> =
            (0..=MAX_TUNING_VALUE.trailing_zeros()).map(|e| 1u32 << e).filter(|v| (lo..=hi).contains(v)).collect();
        Self::uniform::<T>(&list)
    }

    /// The same candidate list for every parameter.
    pub fn uniform<T: TuningParams>(list: &[u32]) -> Result<Self> {
        Self::new::<T>(vec![list.to_vec(); T::NAMES.len()])
    }

    /// Parses a JSON object mapping each parameter name to its list. Missing
    /// and unknown names are errors.
    pub fn from_json_str<T: TuningParams>(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<u32>> = serde_json::from_str(text)?;
        let mut lists = Vec::with_capacity(T::NAMES.len());
        for name in T::NAMES {
            let list =
                map.remove(*name).ok_or_else(|| Error::invalid("bounds", format!("missing parameter {name:?}")))?;
            lists.push(list);
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::invalid("bounds", format!("unknown parameter {extra:?}")));
        }
        Self::new::<T>(lists)
    }

    pub fn load<T: TuningParams>(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str::<T>(&text).map_err(|e| match e {
            Error::Json(e) => Error::parse(path, e),
            other => other,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&str, &Vec<u32>> = self.names.iter().copied().zip(&self.lists).collect();
        serde_json::to_value(map).expect("bounds serialize")
    }

    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn get(&self, name: &str) -> Option<&[u32]> {
        self.index_of(name).map(|i| self.lists[i].as_slice())
    }

    pub fn set(&mut self, name: &str, list: Vec<u32>) -> Result<()> {
        let i = self.index_of(name).ok_or_else(|| Error::invalid("bounds", format!("unknown parameter {name:?}")))?;
        check_list(self.names[i], &list)?;
        self.lists[i] = list;
        Ok(())
    }

    /// Size of the full Cartesian product.
    pub fn product_len(&self) -> u128 {
        self.lists.iter().map(|l| l.len() as u128).product()
    }

    /// Iterates the Cartesian product in lexicographic order (last parameter
    /// varies fastest).
    pub fn product(&self) -> Product<'_> {
        Product { lists: &self.lists, cursor: Some(vec![0; self.lists.len()]) }
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }
}

fn check_list(name: &str, list: &[u32]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::invalid("bounds", format!("{name}: empty candidate list")));
    }
    if let Some(v) = list.iter().find(|v| !(v.is_power_of_two() && **v <= MAX_TUNING_VALUE)) {
        return Err(Error::invalid("bounds", format!("{name}: {v} is not a power of two in [1, {MAX_TUNING_VALUE}]")));
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bounds", format!("{name}: list must be strictly increasing")));
    }
    Ok(())
}

/// Odometer over a bounds product.
pub struct Product<'a> {
    lists: &'a [Vec<u32>],
    cursor: Option<Vec<usize>>,
}

impl Iterator for Product<'_> {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let cursor = self.cursor.as_mut()?;
        let item = cursor.iter().zip(self.lists).map(|(&i, list)| list[i]).collect();
        let mut advanced = false;
        for pos in (0..cursor.len()).rev() {
            cursor[pos] += 1;
            if cursor[pos] < self.lists[pos].len() {
                advanced = true;
                break;
            }
            cursor[pos] = 0;
        }
        if !advanced {
            self.cursor = None;
        }
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::GemmTuning;

    #[test]
    fn default_space_size() {
        let b = ParamBounds::pow2::<GemmTuning>(1, 16).unwrap();
        assert_eq!(b.get("u").unwrap(), &[1, 2, 4, 8, 16]);
        assert_eq!(b.product_len(), 5u128.pow(8));
        assert_eq!(b.product().count(), 390_625);
    }

    #[test]
    fn product_is_lexicographic() {
        let mut b = ParamBounds::uniform::<GemmTuning>(&[1]).unwrap();
        b.set("k_l", vec![1, 2]).unwrap();
        b.set("k_g", vec![1, 4]).unwrap();
        let tails: Vec<(u32, u32)> = b.product().map(|v| (v[6], v[7])).collect();
        assert_eq!(tails, vec![(1, 1), (1, 4), (2, 1), (2, 4)]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let b = ParamBounds::pow2::<GemmTuning>(1, 8).unwrap();
        let text = b.to_json().to_string();
        assert_eq!(ParamBounds::from_json_str::<GemmTuning>(&text).unwrap(), b);

        let mut v = b.to_json();
        v["p"] = serde_json::json!([1]);
        assert!(ParamBounds::from_json_str::<GemmTuning>(&v.to_string()).is_err());

        let mut v = b.to_json();
        v["u"] = serde_json::json!([4, 2]);
        assert!(ParamBounds::from_json_str::<GemmTuning>(&v.to_string()).is_err());

        let mut v = b.to_json();
        v["u"] = serde_json::json!([3]);
        assert!(ParamBounds::from_json_str::<GemmTuning>(&v.to_string()).is_err());

        let mut v = b.to_json();
        v.as_object_mut().unwrap().remove("k_g");
        assert!(ParamBounds::from_json_str::<GemmTuning>(&v.to_string()).is_err());
    }
}
