//! Rule-based identifier splitting.
//!
//! Boundaries are placed at non-alphanumeric separators, lower-to-upper
//! camel humps, digit-to-letter transitions and acronym-to-word transitions
//! (`HTMLParser` -> `html`, `parser`). Digits stay attached to the letters
//! before them (`UTF8`). An uppercase run that is not itself a known acronym
//! but ends in one is split in front of it (`AUTF8` -> `a`, `utf8`).

use crate::error::{Error, Result};

const ACRONYMS: &[&str] = &[
    "API", "ASCII", "CPU", "CSV", "DB", "DOM", "EOF", "GMT", "GUI", "HTML", "HTTP", "HTTPS", "ID",
    "IO", "IP", "ISO", "JDK", "JSON", "JVM", "MIME", "PDF", "RGB", "SAX", "SQL", "TCP", "UDP", "UI",
    "URI", "URL", "UTC", "UTF", "UUID", "XML",
];

fn is_acronym(s: &str) -> bool {
    ACRONYMS.contains(&s)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Upper,
    Lower,
    Digit,
}

fn class_of(c: char) -> Class {
    if c.is_ascii_digit() || c.is_numeric() {
        Class::Digit
    } else if c.is_uppercase() {
        Class::Upper
    } else {
        Class::Lower
    }
}

/// Splits one alphanumeric chunk on case and digit boundaries.
fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = class_of(chars[i - 1]);
        let cur = class_of(chars[i]);
        let next = chars.get(i + 1).map(|&c| class_of(c));
        let boundary = match (prev, cur) {
            (Class::Lower, Class::Upper) => true,
            (Class::Digit, Class::Upper | Class::Lower) => true,
            (Class::Upper, Class::Upper) => next == Some(Class::Lower),
            _ => false,
        };
        if boundary {
            refine_acronym(&chars[start..i], out);
            start = i;
        }
    }
    if start < chars.len() {
        refine_acronym(&chars[start..], out);
    }
}

/// Emits `part`, splitting an unknown uppercase run in front of a trailing
/// known acronym.
fn refine_acronym(part: &[char], out: &mut Vec<String>) {
    let letters = part.iter().take_while(|c| c.is_uppercase()).count();
    let all_upper_then_digits = part[letters..].iter().all(|&c| class_of(c) == Class::Digit);
    if letters >= 2 && all_upper_then_digits {
        let run: String = part[..letters].iter().collect();
        if !is_acronym(&run) {
            for k in 1..letters {
                let (prefix, suffix) = run.split_at(k);
                if is_acronym(suffix) && (k == 1 || is_acronym(prefix)) {
                    out.push(prefix.to_lowercase());
                    let tail: String = suffix.chars().chain(part[letters..].iter().copied()).collect();
                    out.push(tail.to_lowercase());
                    return;
                }
            }
        }
    }
    out.push(part.iter().collect::<String>().to_lowercase());
}

/// Splits an identifier into lowercase subwords.
pub fn split_subwords(token: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in token.split(|c: char| !c.is_alphanumeric()) {
        if !chunk.is_empty() {
            split_chunk(chunk, &mut out);
        }
    }
    out
}

/// Name feature of a test or source method: the class name's subwords
/// followed by the method name's subwords.
pub fn build_name_feature(class_name: &str, method_name: &str) -> Result<Vec<String>> {
    if class_name.is_empty() || method_name.is_empty() {
        return Err(Error::validation("class and method names must be non-empty"));
    }
    let mut out = split_subwords(class_name);
    out.extend(split_subwords(method_name));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compound_with_acronym() {
        assert_eq!(split_subwords("ConvertToAUTF8String"), ["convert", "to", "a", "utf8", "string"]);
    }

    #[test]
    fn camel_and_snake() {
        assert_eq!(split_subwords("daysBetween"), ["days", "between"]);
        assert_eq!(
            split_subwords("testFactory_daysBetween_RPartial_MonthDay"),
            ["test", "factory", "days", "between", "r", "partial", "month", "day"]
        );
        assert_eq!(split_subwords("nullToEmpty"), ["null", "to", "empty"]);
        assert_eq!(split_subwords("EMPTY_DOUBLE_ARRAY"), ["empty", "double", "array"]);
    }

    #[test]
    fn acronym_to_word() {
        assert_eq!(split_subwords("HTMLParser"), ["html", "parser"]);
        assert_eq!(split_subwords("parseXMLDocument"), ["parse", "xml", "document"]);
        assert_eq!(split_subwords("getID"), ["get", "id"]);
        assert_eq!(split_subwords("URLIO"), ["url", "io"]);
    }

    #[test]
    fn digits() {
        assert_eq!(split_subwords("testLang865"), ["test", "lang865"]);
        assert_eq!(split_subwords("v2beta"), ["v2", "beta"]);
        assert_eq!(split_subwords("base64Encode"), ["base64", "encode"]);
        assert_eq!(split_subwords("2ndPass"), ["2", "nd", "pass"]);
    }

    #[test]
    fn separators_only() {
        assert!(split_subwords("_$_").is_empty());
    }

    #[test]
    fn name_feature_concatenates() {
        assert_eq!(
            build_name_feature("TestDays", "testFactory_daysBetween_RPartial_MonthDay").unwrap(),
            ["test", "days", "test", "factory", "days", "between", "r", "partial", "month", "day"]
        );
        assert_eq!(build_name_feature("A", "b").unwrap(), ["a", "b"]);
        assert!(build_name_feature("", "b").is_err());
    }

    proptest! {
        #[test]
        fn parts_reconcatenate_to_input(tok in "[A-Za-z0-9_$]{1,24}") {
            let parts = split_subwords(&tok);
            let joined: String = parts.concat();
            let expected: String = tok.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
            prop_assert_eq!(joined, expected);
            prop_assert!(parts.iter().all(|p| !p.is_empty() && p.to_lowercase() == *p));
        }

        #[test]
        fn name_feature_length_is_compositional(class in "[A-Z][A-Za-z0-9_]{0,12}", method in "[a-z][A-Za-z0-9_]{0,12}") {
            let n = build_name_feature(&class, &method).unwrap().len();
            prop_assert_eq!(n, split_subwords(&class).len() + split_subwords(&method).len());
        }
    }
}
