mod common;

use common::*;
use proptest::prelude::*;
use weierstrass::parser::{parse, parse_in, print, print_with, PrintOptions};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn print_then_parse_is_identity(e in any_expression()) {
        let text = print(&e);
        let back = parse_in(&text, e.dimension()).map_err(|err| TestCaseError::fail(err.render(&text)))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn rounded_printing_stays_close(e in any_expression(), p in point(3)) {
        let text = print_with(&e, &PrintOptions { significant_digits: Some(12) });
        let back = parse_in(&text, e.dimension()).unwrap();
        let p = &p[..e.dimension()];
        let scale: f64 = e.terms().iter().map(|t| t.value(p).abs()).sum::<f64>().max(1.0);
        prop_assert!((back.eval(p).unwrap() - e.eval(p).unwrap()).abs() <= 1e-9 * scale);
    }

    #[test]
    fn arbitrary_text_never_panics(src in "\\PC{0,40}") {
        if let Err(err) = parse(&src) {
            prop_assert!(err.span.start <= err.span.end && err.span.end <= src.len());
            prop_assert!(!err.message.is_empty());
            prop_assert!(src.is_char_boundary(err.span.start));
        }
    }

    #[test]
    fn grammar_shaped_text_never_panics(src in "[x0-9+*^()\\-. ,;=\\[\\]a-z]{0,60}") {
        if let Err(err) = parse(&src) {
            prop_assert!(err.span.end <= src.len());
        }
    }
}

#[test]
fn fixed_strings() {
    let e = parse("x1^2*x2^3 + 0.1*(x1^4 + x2^4)").unwrap();
    assert_eq!(print(&e), "0.1*x2^4 + x1^2*x2^3 + 0.1*x1^4");
    let e = parse("(2*cos(x1) - 3*sin(x2) + 4*cos(x1)*sin(x2) - 8*sin(x1)*cos(x2) + 4)^2").unwrap();
    assert_eq!(parse(&print(&e)).unwrap(), e);
}
