#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcert_core::sysdsl::MapEnv;

/// Values computed in 50-digit arithmetic from the binary64 inputs, then
/// rounded once.
pub const EVAL_TABLE: [(&str, f64); 20] = [
    ("x1 + T*u1", 1.0125),
    ("-x1^2", -0.48999999999999994),
    ("2^3^2", 512.0),
    ("(x1 - x2)/u1", 0.8),
    ("exp(0)", 1.0),
    ("exp(x1)", 2.0137527074704766),
    ("ln(u1)", 0.9162907318741551),
    ("sqrt(u1)", 1.5811388300841898),
    ("sin(x1)", 0.644217687237691),
    ("cos(x2)", 0.26749882862458735),
    ("tan(T)", 0.12565513657513097),
    ("tanh(x2)", -0.8617231593133063),
    ("abs(x2)*sign(x2)", -1.3),
    ("sign(0)", 0.0),
    ("min(x1, x2) + max(x1, x2)", -0.6000000000000001),
    ("-x1/(1 + x1^2)", -0.4697986577181208),
    ("a*x1 + u1*T^2", -0.2409375),
    ("1.5e-3*x1 - 4E2*T", -49.99895),
    ("x2^3", -2.197),
    ("exp(-T)*x1 + (1 - exp(-T))*u1", 0.9115055753477282),
];

pub fn eval_env() -> MapEnv {
    MapEnv::new().with("x1", 0.7).with("x2", -1.3).with("u1", 2.5).with("T", 0.125).with("a", -0.4)
}

/// Worst relative error of the evaluator over the table.
pub fn eval_table_error() -> f64 {
    let env = eval_env();
    EVAL_TABLE
        .iter()
        .map(|(src, want)| {
            let got = sdcert_core::sysdsl::parse_expression(src).unwrap().eval(&env).unwrap();
            if *want == 0.0 {
                got.abs()
            } else {
                ((got - want) / want).abs()
            }
        })
        .fold(0.0, f64::max)
}

const TOKENS: &[&str] = &[
    "x1", "x2", "u1", "T", "a", "1", "2.5", "1e-3", "4E+2", ".5", "1.", "+", "-", "*", "/", "^", "(", ")", ",", " ", "sin", "cos", "min", "max", "exp", "ln",
    "sqrt", "sign", "1e", "x0", "é", "\t", "\n", "#", "[", "=",
];

/// Random bytes, token soup and mutated valid expressions, in equal parts.
pub fn fuzz_inputs(count: usize, seed: u64) -> impl Iterator<Item = Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |i| match i % 3 {
        0 => {
            let len = rng.random_range(0..48);
            (0..len).map(|_| rng.random::<u8>()).collect()
        }
        1 => {
            let len = rng.random_range(0..24);
            (0..len).map(|_| TOKENS[rng.random_range(0..TOKENS.len())]).collect::<String>().into_bytes()
        }
        _ => {
            let mut b = EVAL_TABLE[rng.random_range(0..EVAL_TABLE.len())].0.as_bytes().to_vec();
            for _ in 0..rng.random_range(1..4) {
                let at = rng.random_range(0..=b.len());
                match rng.random_range(0..3) {
                    0 if at < b.len() => {
                        b.remove(at);
                    }
                    1 => b.insert(at, rng.random()),
                    _ => b.splice(at..at, TOKENS[rng.random_range(0..TOKENS.len())].bytes()).for_each(drop),
                }
            }
            b
        }
    })
}
