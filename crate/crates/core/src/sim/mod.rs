//! CKKS-style leveled HE semantics on plaintext slot vectors.
//!
//! No cryptography and no noise: a ciphertext is a slot vector with a level.
//! Every operation is counted so homomorphic operation counts (HOC) can be
//! measured exactly.

mod counter;
mod evaluator;

pub use counter::{read_log, write_log, HocCounter, OpCounts, OpKind, OpRecord};
pub use evaluator::{Evaluator, SimCiphertext, SimContext, SimError};

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(slots: usize, level: u32) -> Evaluator {
        Evaluator::new(SimContext::new(slots, level).unwrap()).with_log()
    }

    #[test]
    fn encrypt_pads_and_sets_level() {
        let e = ev(4, 3);
        let ct = e.encrypt(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ct.slots(), &[1.0, 2.0, 3.0, 0.0]);
        assert_eq!(ct.level(), 3);
        assert_eq!(e.encrypt(&[]).unwrap().slots(), &[0.0; 4]);
        assert!(e.encrypt(&[0.0; 5]).is_err());
    }

    #[test]
    fn quantized_encrypt_rounds_to_grid() {
        let ctx = SimContext::new(4, 1).unwrap().with_quantize(true);
        let ct = ctx.encrypt(&[0.1]).unwrap();
        let s = 2f64.powi(33);
        assert_eq!(ct.slots()[0], (0.1 * s).round() / s);
    }

    #[test]
    fn add_and_level_mismatch() {
        let mut e = ev(2, 5);
        let a = e.encrypt(&[1.0, 2.0]).unwrap();
        let b = e.encrypt(&[3.0, 4.0]).unwrap();
        assert_eq!(e.add(&a, &b).unwrap().slots(), &[4.0, 6.0]);
        let b4 = e.mod_switch(&b, 4).unwrap();
        let err = e.add(&a, &b4).unwrap_err();
        assert!(err.to_string().contains("level mismatch"));
        assert_eq!(e.counter().add, 1);
    }

    #[test]
    fn pmult_consumes_level_and_counts_rescale() {
        let mut e = ev(4, 2);
        let a = e.encrypt(&[1.0, 2.0, 3.0, 0.0]).unwrap();
        let b = e.pmult_scalar(&a, 2.0).unwrap();
        assert_eq!(b.slots(), &[2.0, 4.0, 6.0, 0.0]);
        assert_eq!(b.level(), 1);
        let m = e.pmult(&a, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.slots(), &[1.0, 0.0, 3.0, 0.0]);
        let c = e.pmult_scalar(&b, 1.0).unwrap();
        assert_eq!(c.level(), 0);
        assert!(matches!(
            e.pmult_scalar(&c, 1.0),
            Err(SimError::LevelExhausted { .. })
        ));
        assert_eq!(e.counter().pmult, 3);
        assert_eq!(e.counter().rescale, 3);
    }

    #[test]
    fn cmult_squares_and_checks_levels() {
        let mut e = ev(2, 3);
        let a = e.encrypt(&[2.0, 3.0]).unwrap();
        let b = e.encrypt(&[4.0, 5.0]).unwrap();
        assert_eq!(e.cmult(&a, &b).unwrap().slots(), &[8.0, 15.0]);
        let x = e.encrypt(&[-1.0, 2.0]).unwrap();
        assert_eq!(e.cmult(&x, &x).unwrap().slots(), &[1.0, 4.0]);
        let b2 = e.mod_switch(&b, 2).unwrap();
        assert!(e.cmult(&a, &b2).is_err());
    }

    #[test]
    fn rotation_semantics_and_counting() {
        let mut e = ev(4, 1);
        let a = e.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.rotate(&a, 1).slots(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(e.rotate(&a, -1).slots(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(e.rotate(&a, 0).slots(), a.slots());
        assert_eq!(e.rotate(&a, 8).slots(), a.slots());
        assert_eq!(e.counter().rot, 2);
        let r = e.rotate(&a, 3);
        assert_eq!(e.rotate(&r, 1).slots(), a.slots());
    }

    #[test]
    fn mod_switch_rules() {
        let mut e = ev(2, 5);
        let a = e.encrypt(&[1.0, 2.0]).unwrap();
        let b = e.mod_switch(&a, 3).unwrap();
        assert_eq!((b.slots(), b.level()), (a.slots(), 3));
        assert_eq!(e.mod_switch(&b, 3).unwrap().level(), 3);
        assert!(e.mod_switch(&b, 6).is_err());
        assert_eq!(e.counter().total().hoc(), 0);
    }

    #[test]
    fn fork_join_merges_counters_and_log() {
        let mut e = ev(4, 2);
        e.set_layer("a");
        let x = e.encrypt(&[1.0]).unwrap();
        let mut child = e.fork();
        child.set_layer("b");
        child.rotate(&x, 1);
        child.pmult_scalar(&x, 1.0).unwrap();
        e.rotate(&x, 2);
        e.join(child);
        assert_eq!(e.counter().rot, 2);
        assert_eq!(e.counter().layer("b").pmult, 1);
        assert!(e.counter().is_consistent());
        assert_eq!(HocCounter::from_log(e.log().unwrap()), *e.counter());
    }

    #[test]
    fn log_round_trips_as_json_lines() {
        let mut e = ev(4, 2);
        e.set_layer("l0");
        let x = e.encrypt(&[1.0]).unwrap();
        let y = e.rotate(&x, 3);
        let z = e.pmult_scalar(&y, 2.0).unwrap();
        e.mod_switch(&x, 1).unwrap();
        e.add(&z, &z).unwrap();
        let mut buf = Vec::new();
        write_log(&mut buf, e.log().unwrap()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("\"rotation_amount\":3"));
        let back = read_log(&buf[..]).unwrap();
        assert_eq!(back, e.log().unwrap());
        assert_eq!(HocCounter::from_log(&back), *e.counter());
    }
}
