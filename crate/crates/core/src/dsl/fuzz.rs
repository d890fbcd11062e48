use rand::Rng;

use super::{Builtin, Expr};

/// Random query text for fuzzing and random-agent policies. Mostly
/// well-typed expressions with ids in `0..node_bound + 2` (so a few are
/// invalid), occasionally garbage.
pub fn random_query(rng: &mut impl Rng, node_bound: usize, num_classes: usize) -> String {
    match rng.random_range(0..20) {
        0 => "df.loc[0]".to_string(),
        1 => format!("neighbors({}", rng.random_range(0..node_bound.max(1))),
        _ => {
            let top = *pick(
                rng,
                &[
                    Builtin::Row,
                    Builtin::Features,
                    Builtin::Label,
                    Builtin::Neighbors,
                    Builtin::Hop,
                    Builtin::Degree,
                    Builtin::FeaturesOf,
                    Builtin::LabelsOf,
                    Builtin::CountLabels,
                    Builtin::FilterLabel,
                    Builtin::Sample,
                    Builtin::Head,
                    Builtin::Size,
                    Builtin::Classes,
                ],
            );
            let g = Gen {
                node_bound,
                num_classes,
            };
            g.call(rng, top, 3).to_string()
        }
    }
}

fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

struct Gen {
    node_bound: usize,
    num_classes: usize,
}

impl Gen {
    fn id(&self, rng: &mut impl Rng) -> Expr {
        Expr::Int(rng.random_range(0..self.node_bound as i64 + 2))
    }

    fn ids(&self, rng: &mut impl Rng, depth: usize) -> Expr {
        if depth == 0 || rng.random_bool(0.25) {
            let n = rng.random_range(0..5);
            return Expr::IdList((0..n).map(|_| rng.random_range(0..self.node_bound as i64 + 1)).collect());
        }
        let b = *pick(
            rng,
            &[
                Builtin::Neighbors,
                Builtin::Hop,
                Builtin::FilterLabel,
                Builtin::Sample,
                Builtin::Head,
            ],
        );
        self.call(rng, b, depth - 1)
    }

    fn call(&self, rng: &mut impl Rng, b: Builtin, depth: usize) -> Expr {
        let args = match b {
            Builtin::Row | Builtin::Features | Builtin::Label | Builtin::Neighbors | Builtin::Degree => {
                vec![self.id(rng)]
            }
            Builtin::Hop => vec![self.id(rng), Expr::Int(rng.random_range(0..4))],
            Builtin::FeaturesOf | Builtin::LabelsOf | Builtin::CountLabels | Builtin::Size => {
                vec![self.ids(rng, depth)]
            }
            Builtin::FilterLabel => {
                let class = if rng.random_bool(0.2) {
                    Expr::Str("None".into())
                } else {
                    Expr::Int(rng.random_range(0..self.num_classes.max(1) as i64))
                };
                vec![self.ids(rng, depth), class]
            }
            Builtin::Sample => {
                let mut a = vec![self.ids(rng, depth), Expr::Int(rng.random_range(0..6))];
                if rng.random_bool(0.5) {
                    a.push(Expr::Int(rng.random_range(0..100)));
                }
                a
            }
            Builtin::Head => vec![self.ids(rng, depth), Expr::Int(rng.random_range(0..6))],
            Builtin::Classes => vec![],
        };
        Expr::Call(b, args)
    }
}
