//! Text normalization shared by the pipelines, validators and metrics.

/// Whitespace-token count (Unicode whitespace).
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Casefold, replace punctuation with spaces and collapse whitespace.
///
/// Used for all entity-containment and answer-equality checks inside the
/// synthesis pipelines.
pub fn normalize_entity(s: &str) -> String {
    let folded: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized equality of two entity strings.
pub fn same_entity(a: &str, b: &str) -> bool {
    let na = normalize_entity(a);
    !na.is_empty() && na == normalize_entity(b)
}

/// Whether `haystack` mentions `needle` as a whole-word phrase after
/// normalization. An empty needle never matches.
pub fn mentions(haystack: &str, needle: &str) -> bool {
    let n = normalize_entity(needle);
    if n.is_empty() {
        return false;
    }
    let h = normalize_entity(haystack);
    format!(" {h} ").contains(&format!(" {n} "))
}

/// Answer normalization for exact match and token F1: lower case, drop
/// punctuation, drop the articles `a`, `an`, `the`, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lexical tokens for BM25: lower-cased alphanumeric runs.
pub fn lexical_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_count_uses_unicode_whitespace() {
        assert_eq!(word_count("a b\tc\nd\u{2003}e"), 5);
        assert_eq!(word_count("   "), 0);
    }

    #[test]
    fn entity_normalization() {
        assert_eq!(normalize_entity("  Bram   O'Koro, Jr. "), "bram o koro jr");
        assert!(same_entity("PARIS", "paris."));
        assert!(!same_entity("", ""));
    }

    #[test]
    fn mentions_respects_word_boundaries() {
        assert!(mentions("Who founded Alder Vale?", "alder vale"));
        assert!(!mentions("The annual report", "Ann"));
        assert!(!mentions("anything", ""));
    }

    #[test]
    fn answer_normalization_strips_articles() {
        assert_eq!(normalize_answer("The  Paris!"), "paris");
        assert_eq!(normalize_answer("an apple a day"), "apple day");
    }

    #[test]
    fn lexical_tokens_split_on_non_alnum() {
        assert_eq!(lexical_tokens("Hello, World-42"), vec!["hello", "world", "42"]);
    }
}
