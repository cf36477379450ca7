//! Plain-text solutions: one tour per line, space-separated customer ids.

use crate::error::{Error, Result};
use crate::model::{Instance, Solution};

pub fn write_solution(solution: &Solution) -> String {
    solution.to_string()
}

pub fn read_solution(instance: &Instance, text: &str) -> Result<Solution> {
    let mut routes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let route = line
            .split_whitespace()
            .map(|tok| {
                let node: usize = tok.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad customer index `{tok}`"),
                })?;
                if node == 0 || node > instance.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("customer index {node} outside 1..={}", instance.len()),
                    });
                }
                Ok(node)
            })
            .collect::<Result<Vec<_>>>()?;
        routes.push(route);
    }
    Ok(Solution::from_routes(instance, routes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Point, Rounding};

    #[test]
    fn round_trip() {
        let inst = Instance::new(
            "s",
            Point::new(0.0, 0.0),
            vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0)],
            vec![1.0; 3],
            2.0,
            Rounding::None,
        )
        .unwrap();
        let sol = Solution::from_routes(&inst, vec![vec![3, 1], vec![2]]);
        let text = write_solution(&sol);
        assert_eq!(text, "3 1\n2\n");
        assert_eq!(read_solution(&inst, &text).unwrap(), sol);
        assert!(read_solution(&inst, "4\n").is_err());
        assert!(read_solution(&inst, "0 1\n").is_err());
    }
}
