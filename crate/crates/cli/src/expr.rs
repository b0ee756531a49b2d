//! A deliberately tiny arithmetic expression language for payoff files:
//! numbers, variables, `+ - * /`, unary minus, and the functions
//! `min max abs exp log`. Every evaluation must produce a finite number;
//! division by zero or `log` of a non-positive value is a validation error.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Exp,
    Log,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Abs | Func::Exp | Func::Log => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError(pub String);

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let mut tokens = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '/' => {
                tokens.push(Token::Slash);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(Token::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() {
                    let ch = bytes[i] as char;
                    if ch.is_ascii_digit() || ch == '.' {
                        i += 1;
                    } else if (ch == 'e' || ch == 'E')
                        && i + 1 < bytes.len()
                        && ((bytes[i + 1] as char).is_ascii_digit()
                            || bytes[i + 1] == b'+'
                            || bytes[i + 1] == b'-')
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ExprError(format!("invalid number literal {text:?}")))?;
                tokens.push(Token::Num(value));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() {
                    let ch = bytes[i] as char;
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Ident(src[start..i].to_owned()));
            }
            other => return Err(ExprError(format!("unexpected character {other:?}"))),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, token: &Token, what: &str) -> Result<(), ExprError> {
        match self.advance() {
            Some(t) if &t == token => Ok(()),
            other => Err(ExprError(format!("expected {what}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(Op::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.advance();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(Op::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.advance();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(Op::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.advance();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(Op::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.advance();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.advance() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "min" => Some(Func::Min),
                    "max" => Some(Func::Max),
                    "abs" => Some(Func::Abs),
                    "exp" => Some(Func::Exp),
                    "log" => Some(Func::Log),
                    _ => None,
                };
                if matches!(self.peek(), Some(Token::LParen)) {
                    let func = func.ok_or_else(|| {
                        ExprError(format!("unknown function {name:?}"))
                    })?;
                    self.advance();
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek(), Some(Token::Comma)) {
                        self.advance();
                        args.push(self.expr()?);
                    }
                    self.expect(&Token::RParen, "closing parenthesis")?;
                    if args.len() != func.arity() {
                        return Err(ExprError(format!(
                            "{name} takes {} argument(s), got {}",
                            func.arity(),
                            args.len()
                        )));
                    }
                    Ok(Expr::Call(func, args))
                } else if func.is_some() {
                    Err(ExprError(format!("{name} must be called with arguments")))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(&Token::RParen, "closing parenthesis")?;
                Ok(inner)
            }
            other => Err(ExprError(format!("unexpected token {other:?}"))),
        }
    }
}

/// Parses the source into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(ExprError(format!(
            "trailing input after expression at token {}",
            parser.pos
        )));
    }
    Ok(expr)
}

/// Evaluates against a variable resolver; every intermediate value must be
/// finite.
pub fn eval(expr: &Expr, vars: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
    let value = eval_inner(expr, vars)?;
    if !value.is_finite() {
        return Err(ExprError(format!("expression evaluated to {value}")));
    }
    Ok(value)
}

fn eval_inner(expr: &Expr, vars: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
    match expr {
        Expr::Num(v) => Ok(*v),
        Expr::Var(name) => {
            vars(name).ok_or_else(|| ExprError(format!("unknown variable {name:?}")))
        }
        Expr::Neg(inner) => Ok(-eval_inner(inner, vars)?),
        Expr::Bin(op, lhs, rhs) => {
            let a = eval_inner(lhs, vars)?;
            let b = eval_inner(rhs, vars)?;
            match op {
                Op::Add => Ok(a + b),
                Op::Sub => Ok(a - b),
                Op::Mul => Ok(a * b),
                Op::Div => {
                    if b == 0.0 {
                        Err(ExprError("division by zero".into()))
                    } else {
                        Ok(a / b)
                    }
                }
            }
        }
        Expr::Call(func, args) => {
            let mut values = Vec::with_capacity(args.len());
            for arg in args {
                values.push(eval_inner(arg, vars)?);
            }
            match func {
                Func::Min => Ok(values[0].min(values[1])),
                Func::Max => Ok(values[0].max(values[1])),
                Func::Abs => Ok(values[0].abs()),
                Func::Exp => Ok(values[0].exp()),
                Func::Log => {
                    if values[0] <= 0.0 {
                        Err(ExprError(format!("log of non-positive value {}", values[0])))
                    } else {
                        Ok(values[0].ln())
                    }
                }
            }
        }
    }
}
