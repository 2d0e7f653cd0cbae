use std::collections::BTreeSet;

use super::image::Dataset;
use crate::error::{invalid, Result};

/// Maps raw-label prefixes to parent classes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrefixRules {
    rules: Vec<(String, String)>,
}

impl PrefixRules {
    pub fn new<P: Into<String>, C: Into<String>>(rules: impl IntoIterator<Item = (P, C)>) -> Self {
        Self {
            rules: rules.into_iter().map(|(p, c)| (p.into(), c.into())).collect(),
        }
    }

    /// Parent class for `raw`: the longest matching prefix wins. Two equally
    /// long matches naming different parents are ambiguous.
    pub fn resolve(&self, raw: &str) -> Result<Option<&str>> {
        let mut best: Option<&(String, String)> = None;
        for rule in self.rules.iter().filter(|(p, _)| raw.starts_with(p.as_str())) {
            match best {
                Some(b) if b.0.len() > rule.0.len() => {}
                Some(b) if b.0.len() == rule.0.len() && b.1 != rule.1 => {
                    return Err(invalid!(
                        "label {raw:?} matches prefix {:?} for both {:?} and {:?}",
                        rule.0,
                        b.1,
                        rule.1
                    ));
                }
                Some(b) if b.0.len() == rule.0.len() => {}
                _ => best = Some(rule),
            }
        }
        Ok(best.map(|(_, c)| c.as_str()))
    }
}

#[derive(Debug)]
pub struct Grouping {
    pub dataset: Dataset,
    /// Raw labels no rule matched; kept verbatim in the dataset.
    pub unmatched: BTreeSet<String>,
}

/// Replaces each raw label with its parent class.
pub fn group_labels(dataset: &Dataset, rules: &PrefixRules) -> Result<Grouping> {
    let mut out = dataset.clone();
    let mut unmatched = BTreeSet::new();
    for item in &mut out.items {
        match rules.resolve(&item.raw_label)? {
            Some(parent) => item.raw_label = parent.to_string(),
            None => {
                unmatched.insert(item.raw_label.clone());
            }
        }
    }
    Ok(Grouping {
        dataset: out,
        unmatched,
    })
}

/// Sets `label = 1` for items whose class is in `defect` and `0` for those
/// in `normal`. Every class present must be declared in exactly one set.
pub fn to_binary(dataset: &Dataset, defect: &BTreeSet<String>, normal: &BTreeSet<String>) -> Result<Dataset> {
    let both: Vec<&String> = defect.intersection(normal).collect();
    if !both.is_empty() {
        return Err(invalid!("classes declared both defect and normal: {both:?}"));
    }
    let undeclared: BTreeSet<&str> = dataset
        .items
        .iter()
        .map(|i| i.raw_label.as_str())
        .filter(|c| !defect.contains(*c) && !normal.contains(*c))
        .collect();
    if !undeclared.is_empty() {
        return Err(invalid!("undeclared classes: {undeclared:?}"));
    }
    let mut out = dataset.clone();
    for item in &mut out.items {
        item.label = Some(u8::from(defect.contains(&item.raw_label)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::{Image, LabeledImage};

    fn ds(labels: &[&str]) -> Dataset {
        Dataset::new(
            labels
                .iter()
                .map(|l| LabeledImage::new(Image::filled(2, 2, 1, 0.0), *l, None))
                .collect(),
            1.0,
        )
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn broken_flange_variants_collapse() {
        let rules = PrefixRules::new([("Broken Flange", "Broken Flange")]);
        let g = group_labels(
            &ds(&[
                "Broken Flange WM66- L3 Verify",
                "Broken Flange WM66- R1 Monitor",
                "Bolt",
            ]),
            &rules,
        )
        .unwrap();
        assert_eq!(g.dataset.items[0].raw_label, "Broken Flange");
        assert_eq!(g.dataset.items[1].raw_label, "Broken Flange");
        assert_eq!(g.dataset.items[2].raw_label, "Bolt");
        assert_eq!(g.unmatched, set(&["Bolt"]));
        assert_eq!(g.dataset.len(), 3);
    }

    #[test]
    fn longest_prefix_wins_and_ties_fail() {
        let rules = PrefixRules::new([("Broken", "Broken"), ("Broken Flange", "Flange")]);
        assert_eq!(rules.resolve("Broken Flange WM66-R2 Verify").unwrap(), Some("Flange"));
        assert_eq!(rules.resolve("Broken Bolt").unwrap(), Some("Broken"));
        let tie = PrefixRules::new([("Broken", "A"), ("Broken", "B")]);
        assert!(tie.resolve("Broken x").is_err());
    }

    #[test]
    fn binary_mapping() {
        let d = ds(&["Broken Flange", "Normal", "Broken Flange"]);
        let b = to_binary(&d, &set(&["Broken Flange"]), &set(&["Normal"])).unwrap();
        assert_eq!(
            b.items.iter().map(|i| i.label.unwrap()).collect::<Vec<_>>(),
            vec![1, 0, 1]
        );
        let all_normal = to_binary(&d, &set(&[]), &set(&["Broken Flange", "Normal"])).unwrap();
        assert!(all_normal.items.iter().all(|i| i.label == Some(0)));
        let err = to_binary(&d, &set(&["Broken Flange"]), &set(&[])).unwrap_err();
        assert!(err.to_string().contains("Normal"));
    }

    #[test]
    fn many_raw_labels_collapse_preserving_counts() {
        // 404 distinct raw labels: 4 defect families, 400 normal part labels.
        let mut labels = Vec::new();
        for i in 0..1000 {
            labels.push(format!("Broken Flange WM66- L{} Verify", i % 4));
        }
        for i in 0..2000 {
            labels.push(format!("Part {}", i % 400));
        }
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let d = ds(&refs);
        assert_eq!(d.raw_label_counts().len(), 404);
        let rules = PrefixRules::new([("Broken Flange", "defect"), ("Part", "normal")]);
        let g = group_labels(&d, &rules).unwrap();
        let b = to_binary(&g.dataset, &set(&["defect"]), &set(&["normal"])).unwrap();
        assert_eq!(b.class_counts().get(&1), Some(&1000));
        assert_eq!(b.class_counts().get(&0), Some(&2000));
    }
}
