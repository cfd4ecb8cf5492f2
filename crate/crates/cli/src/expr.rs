//! Scalar expressions over indexed variables, used for user factors and charts.

use evalexpr::error::EvalexprResultValue;
use evalexpr::{build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value};

/// A parsed expression in the variables `{prefix}0 … {prefix}{arity-1}`, plus
/// the constants `pi` and `e`. Builtins such as `math::sin` are available.
pub struct Expression {
    source: String,
    prefix: char,
    arity: usize,
    tree: Node<DefaultNumericTypes>,
}

impl std::fmt::Debug for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Expression")
            .field("source", &self.source)
            .field("arity", &self.arity)
            .finish()
    }
}

struct Vars {
    prefix: char,
    values: Vec<Value<DefaultNumericTypes>>,
    pi: Value<DefaultNumericTypes>,
    e: Value<DefaultNumericTypes>,
}

impl Context for Vars {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value<DefaultNumericTypes>> {
        match identifier {
            "pi" => return Some(&self.pi),
            "e" => return Some(&self.e),
            _ => {}
        }
        let rest = identifier.strip_prefix(self.prefix)?;
        if rest.len() > 1 && rest.starts_with('0') {
            return None;
        }
        self.values.get(rest.parse::<usize>().ok()?)
    }

    fn call_function(
        &self,
        identifier: &str,
        _argument: &Value<DefaultNumericTypes>,
    ) -> EvalexprResultValue<DefaultNumericTypes> {
        Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string()))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        if disabled {
            Err(EvalexprError::BuiltinFunctionsCannotBeDisabled)
        } else {
            Ok(())
        }
    }
}

impl Expression {
    /// Parses `source` and evaluates it once at `probe` so that unknown
    /// identifiers and type errors surface immediately.
    pub fn parse(source: &str, prefix: char, arity: usize, probe: &[f64]) -> Result<Self, String> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| format!("`{source}`: {e}"))?;
        let expr = Self {
            source: source.to_string(),
            prefix,
            arity,
            tree,
        };
        expr.try_eval(probe).map_err(|e| format!("`{source}`: {e}"))?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn try_eval(&self, args: &[f64]) -> Result<f64, String> {
        if args.len() != self.arity {
            return Err(format!("expected {} arguments, got {}", self.arity, args.len()));
        }
        let ctx = Vars {
            prefix: self.prefix,
            values: args.iter().map(|&v| Value::Float(v)).collect(),
            pi: Value::Float(std::f64::consts::PI),
            e: Value::Float(std::f64::consts::E),
        };
        self.tree.eval_number_with_context(&ctx).map_err(|e| e.to_string())
    }

    /// Evaluation errors after a successful probe become NaN, which the
    /// numerical pipeline rejects downstream.
    pub fn eval(&self, args: &[f64]) -> f64 {
        self.try_eval(args).unwrap_or(f64::NAN)
    }
}
