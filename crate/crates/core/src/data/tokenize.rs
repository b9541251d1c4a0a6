/// Lowercases, splits on whitespace and peels trailing punctuation off each
/// word into separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let body = word.trim_end_matches(|c: char| c.is_ascii_punctuation());
        if !body.is_empty() {
            out.push(body.to_string());
        }
        out.extend(word[body.len()..].chars().map(String::from));
    }
    out
}
