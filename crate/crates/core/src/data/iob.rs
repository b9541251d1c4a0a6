use super::tokenize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IobOutcome {
    pub tags: Vec<String>,
    /// `(slot, value)` pairs whose value was not found in the utterance.
    pub unmatched: Vec<(String, String)>,
}

/// Tags the first untagged occurrence of each slot value's token sequence.
///
/// Values are placed longest first (ties by slot name), each at its leftmost
/// position that does not overlap an already placed value. Matching is
/// case-insensitive on tokens produced by [`tokenize`].
pub fn derive_iob<S: AsRef<str>>(tokens: &[S], slots: &[(String, String)]) -> IobOutcome {
    let lowered: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut tags = vec!["O".to_string(); tokens.len()];
    let mut taken = vec![false; tokens.len()];
    let mut unmatched = Vec::new();

    let mut order: Vec<(&String, Vec<String>, &String)> = slots
        .iter()
        .map(|(slot, value)| (slot, tokenize(value), value))
        .collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(b.0)));

    for (slot, needle, value) in order {
        let n = needle.len();
        let found = if n == 0 || n > lowered.len() {
            None
        } else {
            (0..=lowered.len() - n).find(|&s| !taken[s..s + n].iter().any(|&t| t) && lowered[s..s + n] == needle[..])
        };
        match found {
            Some(start) => {
                tags[start] = format!("B-{slot}");
                for t in &mut tags[start + 1..start + n] {
                    *t = format!("I-{slot}");
                }
                taken[start..start + n].fill(true);
            }
            None => unmatched.push((slot.clone(), value.clone())),
        }
    }
    IobOutcome { tags, unmatched }
}
