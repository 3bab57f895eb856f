//! Small hand-checkable instances with known allocations.

use super::{DemandTrace, TraceError};
use crate::karma::Config;
use crate::scalar::{rational, Rational};

pub const EXAMPLE_NAMES: [&str; 7] = [
    "fig3",
    "fig4",
    "fig6-gain",
    "fig6-loss",
    "maxmin-worstcase",
    "table1",
    "table2",
];

/// Starting balance for instances where credits must never run out.
const PLENTY: i128 = 1_000_000;

#[derive(Debug, Clone)]
pub struct Example {
    pub name: String,
    pub trace: DemandTrace,
    pub config: Config<Rational>,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn zero_alpha(n: usize, f: u64) -> Config<Rational> {
    Config::uniform(n, f, rational(0, 1), Rational::from_integer(PLENTY))
}

/// Returns the named instance. `n` sizes the parametric ones and is ignored
/// by the fixed-size instances.
pub fn gen_example(name: &str, n: Option<usize>) -> Result<Example, TraceError> {
    let too_small = |min: usize, n: usize| TraceError::InstanceTooSmall {
        name: name.to_string(),
        min,
        n,
    };
    let (users, rows, config) = match name {
        "fig3" | "fig4" => {
            let rows = vec![
                vec![3, 2, 1],
                vec![3, 0, 0],
                vec![0, 3, 0],
                vec![2, 2, 4],
                vec![2, 3, 5],
            ];
            let config = Config::uniform(3, 2, rational(1, 2), Rational::from_integer(6));
            (names(&["A", "B", "C"]), rows, config)
        }
        "fig6-gain" => {
            let rows = vec![vec![8, 8, 0, 0], vec![8, 0, 8, 0], vec![8, 8, 0, 0]];
            (names(&["A", "B", "C", "D"]), rows, zero_alpha(4, 2))
        }
        "fig6-loss" => {
            let rows = vec![vec![8, 0, 0, 0], vec![8, 2, 2, 2], vec![8, 2, 2, 2]];
            (names(&["A", "B", "C", "D"]), rows, zero_alpha(4, 2))
        }
        "maxmin-worstcase" => {
            let n = n.unwrap_or(4);
            if n < 2 {
                return Err(too_small(2, n));
            }
            let mut users: Vec<String> = (1..n).map(|i| format!("U{i}")).collect();
            users.push("A".into());
            let mut rows = vec![];
            for t in 0..=n {
                let mut row = vec![1u64; n - 1];
                row.push(if t < n { 0 } else { n as u64 });
                rows.push(row);
            }
            (users, rows, zero_alpha(n, 1))
        }
        "table1" | "table2" => {
            let n = n.unwrap_or(8);
            if n < 3 {
                return Err(too_small(3, n));
            }
            let nn = n as u64;
            let mut users = names(&["A"]);
            let mut columns: Vec<Vec<u64>> = vec![vec![nn; 3]];
            if name == "table1" {
                users.extend(names(&["B", "C"]));
                columns.push(vec![nn, 0, nn]);
                columns.push(vec![0, nn, 0]);
                users.extend((4..=n).map(|i| format!("U{i}")));
                columns.extend((4..=n).map(|_| vec![0; 3]));
            } else {
                users.extend((2..=n).map(|i| format!("U{i}")));
                columns.extend((2..=n).map(|_| vec![0, 1, 1]));
            }
            let trace = DemandTrace::from_columns(users, &columns)?;
            return Ok(Example {
                name: name.into(),
                trace,
                config: zero_alpha(n, 1),
            });
        }
        other => return Err(TraceError::UnknownExample(other.to_string())),
    };
    let trace = DemandTrace::new(users, rows)?;
    Ok(Example {
        name: name.into(),
        trace,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_shape() {
        let ex = gen_example("fig3", None).unwrap();
        assert_eq!(ex.trace.n_quanta(), 5);
        assert_eq!(ex.trace.quantum(0), [3, 2, 1]);
        assert_eq!(ex.config.capacity(), 6);
    }

    #[test]
    fn worstcase_layout() {
        let ex = gen_example("maxmin-worstcase", Some(5)).unwrap();
        assert_eq!(ex.trace.n_quanta(), 6);
        assert_eq!(ex.trace.users().last().unwrap(), "A");
        assert_eq!(ex.trace.column(4), [0, 0, 0, 0, 0, 5]);
        assert_eq!(ex.trace.column(0), [1; 6]);
    }

    #[test]
    fn tables() {
        let t1 = gen_example("table1", Some(8)).unwrap();
        assert_eq!(t1.trace.column(1), [8, 0, 8]);
        assert_eq!(t1.trace.column(7), [0, 0, 0]);
        let t2 = gen_example("table2", Some(3)).unwrap();
        assert_eq!(
            t2.trace.rows(),
            [vec![3, 0, 0], vec![3, 1, 1], vec![3, 1, 1]]
        );
        assert!(matches!(
            gen_example("table2", Some(2)),
            Err(TraceError::InstanceTooSmall { .. })
        ));
        assert!(matches!(
            gen_example("fig9", None),
            Err(TraceError::UnknownExample(_))
        ));
    }

    #[test]
    fn configs_are_valid() {
        for name in EXAMPLE_NAMES {
            let ex = gen_example(name, None).unwrap();
            ex.config.validate().unwrap();
            assert_eq!(ex.config.n_users(), ex.trace.n_users());
        }
    }
}
