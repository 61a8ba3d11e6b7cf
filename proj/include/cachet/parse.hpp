#pragma once

// Text front end for the input language. Recursive descent, `#` comments,
// C-style operator precedence. Errors carry line/column.

#include <cctype>
#include <set>
#include <string>

#include "cachet/ir.hpp"

namespace cachet {

struct ParseError : IrError {
  int line, col;
  ParseError(const std::string& msg, int line_, int col_)
      : IrError("line " + std::to_string(line_) + " col " + std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

namespace detail {

struct Lexer {
  std::string_view src;
  size_t pos = 0;
  int line = 1, col = 1;

  struct Token {
    enum Kind { Ident, Number, Punct, End } kind;
    std::string text;
    uint64_t value = 0;
    int line, col;
  };

  Token next;

  explicit Lexer(std::string_view s) : src(s) { advance(); }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, next.line, next.col); }

  void bump(char c) {
    ++pos;
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }

  void skip_ws() {
    while (pos < src.size()) {
      char c = src[pos];
      if (c == '#') {
        while (pos < src.size() && src[pos] != '\n') bump(src[pos]);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        bump(c);
      } else {
        break;
      }
    }
  }

  void advance() {
    skip_ws();
    next.line = line;
    next.col = col;
    if (pos >= src.size()) {
      next.kind = Token::End;
      next.text.clear();
      return;
    }
    char c = src[pos];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string t;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) {
        t += src[pos];
        bump(src[pos]);
      }
      next.kind = Token::Ident;
      next.text = std::move(t);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      uint64_t v = 0;
      std::string t;
      if (c == '0' && pos + 1 < src.size() && (src[pos + 1] == 'x' || src[pos + 1] == 'X')) {
        t = "0x";
        bump(src[pos]);
        bump(src[pos]);
        if (pos >= src.size() || !std::isxdigit(static_cast<unsigned char>(src[pos])))
          throw ParseError("expected hex digits after 0x", line, col);
        while (pos < src.size() && std::isxdigit(static_cast<unsigned char>(src[pos]))) {
          char d = src[pos];
          v = v * 16 + static_cast<uint64_t>(std::isdigit(static_cast<unsigned char>(d))
                                                 ? d - '0'
                                                 : std::tolower(d) - 'a' + 10);
          t += d;
          bump(d);
        }
      } else {
        while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
          v = v * 10 + static_cast<uint64_t>(src[pos] - '0');
          t += src[pos];
          bump(src[pos]);
        }
      }
      next.kind = Token::Number;
      next.text = std::move(t);
      next.value = v;
      return;
    }
    // punctuation, longest match first
    static const char* two[] = {"<<", ">>", "<=", ">=", "==", "!=", ".."};
    for (auto* t : two) {
      if (src.substr(pos, 2) == t) {
        next.kind = Token::Punct;
        next.text = t;
        bump(src[pos]);
        bump(src[pos]);
        return;
      }
    }
    next.kind = Token::Punct;
    next.text = std::string(1, c);
    bump(c);
  }

  bool at_punct(const std::string& t) const { return next.kind == Token::Punct && next.text == t; }
  bool at_ident(const std::string& t) const { return next.kind == Token::Ident && next.text == t; }

  void expect_punct(const std::string& t) {
    if (!at_punct(t)) fail("expected '" + t + "'");
    advance();
  }

  std::string expect_ident() {
    if (next.kind != Token::Ident) fail("expected identifier");
    std::string t = next.text;
    advance();
    return t;
  }

  uint64_t expect_number(const char* what) {
    if (next.kind != Token::Number) fail(std::string("expected ") + what);
    uint64_t v = next.value;
    advance();
    return v;
  }
};

struct Parser {
  Lexer lx;
  Program prog;
  std::set<std::string> visible;  // secrets, loop vars in scope, let names

  explicit Parser(std::string_view src) : lx(src) {}

  static bool is_keyword(const std::string& s) {
    static const std::set<std::string> kw = {"secret", "array", "load", "store",
                                             "let",    "if",    "else", "for",
                                             "in"};
    return kw.count(s) > 0;
  }

  ExprPtr parse_primary() {
    if (lx.next.kind == Lexer::Token::Number) {
      uint64_t v = lx.next.value;
      if (v > 0xffffffffull) lx.fail("literal exceeds 32 bits");
      lx.advance();
      return e_const(static_cast<uint32_t>(v));
    }
    if (lx.at_punct("(")) {
      lx.advance();
      ExprPtr e = parse_expr();
      lx.expect_punct(")");
      return e;
    }
    if (lx.next.kind == Lexer::Token::Ident) {
      if (is_keyword(lx.next.text)) lx.fail("unexpected keyword '" + lx.next.text + "'");
      if (!visible.count(lx.next.text)) lx.fail("unknown identifier '" + lx.next.text + "'");
      std::string n = lx.next.text;
      lx.advance();
      return e_ref(n);
    }
    lx.fail("expected expression");
  }

  // precedence climbing; levels match expr_prec() in ir.hpp
  ExprPtr parse_bin(int min_prec) {
    ExprPtr lhs = parse_primary();
    for (;;) {
      ExprOp op;
      int prec;
      const std::string& t = lx.next.text;
      if (lx.next.kind != Lexer::Token::Punct) break;
      if (t == "*") {
        op = ExprOp::Mul;
        prec = 7;
      } else if (t == "+") {
        op = ExprOp::Add;
        prec = 6;
      } else if (t == "-") {
        op = ExprOp::Sub;
        prec = 6;
      } else if (t == "<<") {
        op = ExprOp::Shl;
        prec = 5;
      } else if (t == ">>") {
        op = ExprOp::Shr;
        prec = 5;
      } else if (t == "<") {
        op = ExprOp::Lt;
        prec = 4;
      } else if (t == "<=") {
        op = ExprOp::Le;
        prec = 4;
      } else if (t == ">") {
        op = ExprOp::Gt;
        prec = 4;
      } else if (t == ">=") {
        op = ExprOp::Ge;
        prec = 4;
      } else if (t == "==") {
        op = ExprOp::Eq;
        prec = 3;
      } else if (t == "!=") {
        op = ExprOp::Ne;
        prec = 3;
      } else if (t == "&") {
        op = ExprOp::BitAnd;
        prec = 2;
      } else if (t == "^") {
        op = ExprOp::BitXor;
        prec = 1;
      } else if (t == "|") {
        op = ExprOp::BitOr;
        prec = 0;
      } else {
        break;
      }
      if (prec < min_prec) break;
      lx.advance();
      ExprPtr rhs = parse_bin(prec + 1);
      lhs = e_bin(op, lhs, rhs);
    }
    return lhs;
  }

  ExprPtr parse_expr() { return parse_bin(0); }

  void parse_secret() {
    lx.advance();  // 'secret'
    std::string name = lx.expect_ident();
    declare_name(name);
    lx.expect_punct(":");
    if (lx.next.kind != Lexer::Token::Ident || lx.next.text.size() < 2 || lx.next.text[0] != 'u')
      lx.fail("expected width like u8");
    uint32_t width = 0;
    for (size_t k = 1; k < lx.next.text.size(); ++k) {
      if (!std::isdigit(static_cast<unsigned char>(lx.next.text[k]))) lx.fail("bad secret width");
      width = width * 10 + static_cast<uint32_t>(lx.next.text[k] - '0');
    }
    if (width == 0 || width > 16) lx.fail("secret width must be 1..16 bits");
    lx.advance();
    lx.expect_punct(";");
    prog.secrets.push_back({name, width});
    visible.insert(name);
  }

  void parse_array() {
    lx.advance();  // 'array'
    std::string name = lx.expect_ident();
    declare_name(name);
    lx.expect_punct("[");
    uint64_t count = lx.expect_number("element count");
    lx.expect_punct("]");
    lx.expect_punct(":");
    uint64_t elem = lx.expect_number("element size");
    lx.expect_punct("@");
    uint64_t base = lx.expect_number("base address");
    lx.expect_punct(";");
    if (count == 0) lx.fail("array must have at least one element");
    if (elem == 0) lx.fail("element size must be positive");
    if (base % elem != 0) lx.fail("array base must be a multiple of the element size");
    ArrayDecl d{name, static_cast<uint32_t>(count), static_cast<uint32_t>(elem), base};
    for (auto& other : prog.arrays) {
      uint64_t lo = d.base, hi = d.base + uint64_t(d.count) * d.elem_size;
      uint64_t olo = other.base, ohi = other.base + uint64_t(other.count) * other.elem_size;
      if (lo < ohi && olo < hi)
        lx.fail("array '" + name + "' overlaps array '" + other.name + "'");
    }
    prog.arrays.push_back(d);
  }

  void declare_name(const std::string& name) {
    if (is_keyword(name)) lx.fail("'" + name + "' is a keyword");
    if (visible.count(name) || prog.find_array(name))
      lx.fail("duplicate name '" + name + "'");
  }

  StmtPtr parse_stmt() {
    if (lx.at_ident("load") || lx.at_ident("store")) {
      bool is_store = lx.next.text == "store";
      lx.advance();
      std::string arr = lx.expect_ident();
      if (!prog.find_array(arr)) lx.fail("unknown array '" + arr + "'");
      lx.expect_punct("[");
      ExprPtr idx = parse_expr();
      lx.expect_punct("]");
      lx.expect_punct(";");
      return std::make_shared<Stmt>(LoadStoreStmt{is_store, arr, idx});
    }
    if (lx.at_ident("let")) {
      lx.advance();
      std::string name = lx.expect_ident();
      if (is_keyword(name) || prog.find_array(name)) lx.fail("bad let name '" + name + "'");
      lx.expect_punct("=");
      ExprPtr e = parse_expr();
      lx.expect_punct(";");
      visible.insert(name);
      return std::make_shared<Stmt>(LetStmt{name, e});
    }
    if (lx.at_ident("if")) {
      lx.advance();
      lx.expect_punct("(");
      ExprPtr cond = parse_expr();
      lx.expect_punct(")");
      IfStmt s{cond, parse_block(), {}};
      if (lx.at_ident("else")) {
        lx.advance();
        s.else_body = parse_block();
      }
      return std::make_shared<Stmt>(std::move(s));
    }
    if (lx.at_ident("for")) {
      lx.advance();
      std::string var = lx.expect_ident();
      if (is_keyword(var)) lx.fail("bad loop variable");
      if (!lx.at_ident("in")) lx.fail("expected 'in'");
      lx.advance();
      if (lx.next.kind == Lexer::Token::Ident) lx.fail("loop bound must be a constant");
      uint64_t lo = lx.expect_number("loop lower bound");
      lx.expect_punct("..");
      if (lx.next.kind == Lexer::Token::Ident) lx.fail("loop bound must be a constant");
      uint64_t hi = lx.expect_number("loop upper bound");
      if (hi < lo) lx.fail("empty or negative loop range");
      bool shadowed = visible.count(var) > 0;
      visible.insert(var);
      ForStmt s{var, static_cast<uint32_t>(lo), static_cast<uint32_t>(hi), parse_block()};
      if (!shadowed) visible.erase(var);
      return std::make_shared<Stmt>(std::move(s));
    }
    lx.fail("expected statement");
  }

  std::vector<StmtPtr> parse_block() {
    lx.expect_punct("{");
    std::vector<StmtPtr> body;
    while (!lx.at_punct("}")) body.push_back(parse_stmt());
    lx.expect_punct("}");
    return body;
  }

  Program run() {
    while (lx.next.kind != Lexer::Token::End) {
      if (lx.at_ident("secret"))
        parse_secret();
      else if (lx.at_ident("array"))
        parse_array();
      else
        prog.body.push_back(parse_stmt());
    }
    return std::move(prog);
  }
};

}  // namespace detail

inline Program parse_program(std::string_view text) {
  detail::Parser p(text);
  return p.run();
}

}  // namespace cachet
