//! The action transition graph and assembly of action sequences into forms.

use std::collections::BTreeSet;

use super::{Action, ActionTag, Condition, LfError, LogicalForm, Operator};

/// A successor in the transition graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Next {
    Tag(ActionTag),
    End,
}

/// Successors of the last tag in `prefix` (START when empty).
///
/// Copy actions are removed when there is no previous form. After A3 the
/// pending operator decides between A4 (comparisons) and END (argmin/argmax);
/// with no operator known both are returned.
pub fn legal_successors(
    prefix: &[ActionTag],
    has_previous: bool,
    pending_op: Option<Operator>,
) -> BTreeSet<Next> {
    use ActionTag::*;
    let next: Vec<Next> = match prefix.last() {
        None => {
            let mut v = vec![Next::Tag(A1)];
            if has_previous {
                v.extend([Next::Tag(A5), Next::Tag(A6), Next::Tag(A7)]);
            }
            v
        }
        Some(A1) if prefix.first() == Some(&A6) => vec![Next::End],
        Some(A1) => vec![Next::Tag(A2), Next::End],
        Some(A2) => vec![Next::Tag(A3)],
        Some(A3) => match pending_op {
            Some(op) if op.takes_value() => vec![Next::Tag(A4)],
            Some(_) => vec![Next::End],
            None => vec![Next::Tag(A4), Next::End],
        },
        Some(A4) => vec![Next::End],
        Some(A5) | Some(A7) => vec![Next::Tag(A2)],
        Some(A6) => vec![Next::Tag(A1)],
    };
    next.into_iter().collect()
}

#[derive(Default)]
struct PendingCondition {
    column: Option<String>,
    op: Option<Operator>,
}

/// Builds a logical form from a complete START→END action sequence.
pub fn assemble(actions: &[Action], previous: Option<&LogicalForm>) -> Result<LogicalForm, LfError> {
    if previous.is_none() && actions.iter().any(|a| a.tag().is_copy()) {
        return Err(LfError::MissingPrevious);
    }
    let mut select: Option<String> = None;
    let mut conditions: Vec<Condition> = Vec::new();
    let mut pending = PendingCondition::default();
    let mut prefix: Vec<ActionTag> = Vec::with_capacity(actions.len());

    for (position, action) in actions.iter().enumerate() {
        let tag = action.tag();
        if tag == ActionTag::A4 && pending.op.is_some_and(|op| !op.takes_value()) {
            return Err(LfError::MalformedCondition("argmin/argmax take no value"));
        }
        let allowed = legal_successors(&prefix, previous.is_some(), pending.op);
        if !allowed.contains(&Next::Tag(tag)) {
            return Err(LfError::IllegalSequence { position });
        }
        match action {
            Action::SelectCol(c) => select = Some(c.clone()),
            Action::WhereCol(c) => pending.column = Some(c.clone()),
            Action::WhereOp(op) => {
                pending.op = Some(*op);
                if !op.takes_value() {
                    conditions.push(Condition::extremum(
                        pending.column.take().expect("A2 precedes A3"),
                        *op,
                    ));
                }
            }
            Action::WhereVal(v) => {
                let op = pending.op.take().expect("A3 precedes A4");
                conditions.push(Condition::compare(
                    pending.column.take().expect("A2 precedes A4"),
                    op,
                    v.clone(),
                ));
            }
            Action::CopySelect => select = Some(previous.unwrap().select_column.clone()),
            Action::CopyWhere => conditions = previous.unwrap().conditions.clone(),
            Action::CopyAll => {
                let prev = previous.unwrap();
                if prev.conditions.len() >= 2 {
                    return Err(LfError::TooManyConditions);
                }
                select = Some(prev.select_column.clone());
                conditions = prev.conditions.clone();
            }
        }
        prefix.push(tag);
    }

    if !legal_successors(&prefix, previous.is_some(), pending.op).contains(&Next::End) {
        if prefix.last() == Some(&ActionTag::A3) {
            return Err(LfError::MalformedCondition("comparison operator without a value"));
        }
        return Err(LfError::IllegalSequence {
            position: actions.len(),
        });
    }
    Ok(LogicalForm {
        select_column: select.ok_or(LfError::IllegalSequence { position: 0 })?,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::Sketch;
    use ActionTag::*;

    fn set(items: &[Next]) -> BTreeSet<Next> {
        items.iter().copied().collect()
    }

    fn olympic_turn1() -> LogicalForm {
        LogicalForm::select("City").with_condition(Condition::compare("Year", Operator::Eq, "2008"))
    }

    #[test]
    fn start_successors() {
        assert_eq!(legal_successors(&[], false, None), set(&[Next::Tag(A1)]));
        assert_eq!(
            legal_successors(&[], true, None),
            set(&[Next::Tag(A1), Next::Tag(A5), Next::Tag(A6), Next::Tag(A7)])
        );
    }

    #[test]
    fn extremum_ends_after_operator() {
        for has_prev in [false, true] {
            assert_eq!(
                legal_successors(&[A1, A2, A3], has_prev, Some(Operator::Argmax)),
                set(&[Next::End])
            );
        }
        assert_eq!(
            legal_successors(&[A1, A2, A3], false, Some(Operator::Lt)),
            set(&[Next::Tag(A4)])
        );
    }

    #[test]
    fn select_after_copy_where_ends() {
        assert_eq!(legal_successors(&[A6, A1], true, None), set(&[Next::End]));
        assert_eq!(
            legal_successors(&[A1], true, None),
            set(&[Next::Tag(A2), Next::End])
        );
    }

    #[test]
    fn every_sketch_is_a_path() {
        for sketch in Sketch::ALL {
            let tags = sketch.action_tags();
            for i in 0..tags.len() {
                let op = (i > 2).then_some(Operator::Eq);
                assert!(legal_successors(&tags[..i], true, op).contains(&Next::Tag(tags[i])));
            }
            assert!(legal_successors(tags, true, Some(Operator::Eq)).contains(&Next::End));
        }
    }

    #[test]
    fn assemble_full_form() {
        let lf = assemble(
            &[
                Action::SelectCol("City".into()),
                Action::WhereCol("Year".into()),
                Action::WhereOp(Operator::Eq),
                Action::WhereVal("2008".into()),
            ],
            None,
        )
        .unwrap();
        assert_eq!(lf, olympic_turn1());
    }

    #[test]
    fn copy_where_then_select() {
        let prev = olympic_turn1();
        let lf = assemble(&[Action::CopyWhere, Action::SelectCol("Nations".into())], Some(&prev)).unwrap();
        assert_eq!(
            lf,
            LogicalForm::select("Nations")
                .with_condition(Condition::compare("Year", Operator::Eq, "2008"))
        );
    }

    #[test]
    fn copy_all_appends_condition() {
        let prev = olympic_turn1();
        let lf = assemble(
            &[
                Action::CopyAll,
                Action::WhereCol("Nations".into()),
                Action::WhereOp(Operator::Argmax),
            ],
            Some(&prev),
        )
        .unwrap();
        assert_eq!(lf.select_column, "City");
        assert_eq!(lf.conditions.len(), 2);
        assert_eq!(lf.conditions[0], prev.conditions[0]);

        let two = lf.clone();
        let err = assemble(
            &[
                Action::CopyAll,
                Action::WhereCol("Year".into()),
                Action::WhereOp(Operator::Argmin),
            ],
            Some(&two),
        );
        assert_eq!(err, Err(LfError::TooManyConditions));
    }

    #[test]
    fn copy_without_history() {
        let r = assemble(
            &[
                Action::CopySelect,
                Action::WhereCol("Gold".into()),
                Action::WhereOp(Operator::Gt),
                Action::WhereVal("0".into()),
            ],
            None,
        );
        assert_eq!(r, Err(LfError::MissingPrevious));
    }

    #[test]
    fn malformed_conditions() {
        let value_after_argmax = assemble(
            &[
                Action::SelectCol("City".into()),
                Action::WhereCol("Nations".into()),
                Action::WhereOp(Operator::Argmax),
                Action::WhereVal("3".into()),
            ],
            None,
        );
        assert!(matches!(value_after_argmax, Err(LfError::MalformedCondition(_))));
        let missing_value = assemble(
            &[
                Action::SelectCol("City".into()),
                Action::WhereCol("Nations".into()),
                Action::WhereOp(Operator::Gt),
            ],
            None,
        );
        assert!(matches!(missing_value, Err(LfError::MalformedCondition(_))));
    }

    #[test]
    fn illegal_paths() {
        assert!(matches!(assemble(&[], None), Err(LfError::IllegalSequence { .. })));
        assert!(matches!(
            assemble(&[Action::WhereCol("a".into())], None),
            Err(LfError::IllegalSequence { position: 0 })
        ));
        let prev = olympic_turn1();
        assert!(matches!(
            assemble(&[Action::CopyWhere], Some(&prev)),
            Err(LfError::IllegalSequence { .. })
        ));
        assert!(matches!(
            assemble(
                &[Action::SelectCol("a".into()), Action::CopySelect],
                Some(&prev)
            ),
            Err(LfError::IllegalSequence { position: 1 })
        ));
    }
}
