#![no_main]
use acfe::expr::{Bindings, Expr};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(e) = Expr::parse(data) {
        let again = Expr::parse(&e.to_string()).expect("printed expression parses");
        assert_eq!(again, e);
        let _ = e.eval(&Bindings { x: 0.5, y: -0.25, t: 0.1, eps: 0.05 });
    }
});
