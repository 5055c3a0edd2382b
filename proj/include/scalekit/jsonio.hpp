#pragma once

// Deterministic JSON emission: insertion-ordered keys and floating-point
// values printed with 17 significant digits, so identical results serialize
// byte-identically.

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace scalekit::json {

class Value;
using Array = std::vector<Value>;
using Member = std::pair<std::string, Value>;

class Object {
 public:
  std::vector<Member> members;
  Value& operator[](const std::string& key);
};

class Value {
 public:
  std::variant<std::nullptr_t, bool, double, std::int64_t, std::string,
               std::shared_ptr<Object>, std::shared_ptr<Array>>
      v;

  Value() : v(nullptr) {}
  Value(bool b) : v(b) {}
  Value(double d) : v(d) {}
  Value(int i) : v(static_cast<std::int64_t>(i)) {}
  Value(std::int64_t i) : v(i) {}
  Value(std::uint64_t i) : v(static_cast<std::int64_t>(i)) {}
  Value(const char* s) : v(std::string(s)) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(Object o) : v(std::make_shared<Object>(std::move(o))) {}
  Value(Array a) : v(std::make_shared<Array>(std::move(a))) {}
};

inline Value& Object::operator[](const std::string& key) {
  for (auto& m : members)
    if (m.first == key) return m.second;
  members.emplace_back(key, Value());
  return members.back().second;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  return out;
}

inline std::string format_double(double d) {
  if (std::isnan(d)) return "null";
  if (std::isinf(d)) return d > 0 ? "1e999" : "-1e999";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline void dump(const Value& value, std::string& out, int indent, int depth) {
  struct Visitor {
    std::string& out;
    int indent, depth;
    void pad(int level) const {
      if (indent > 0) out.append(static_cast<std::size_t>(indent * level), ' ');
    }
    void operator()(std::nullptr_t) const { out += "null"; }
    void operator()(bool b) const { out += b ? "true" : "false"; }
    void operator()(double d) const { out += format_double(d); }
    void operator()(std::int64_t i) const { out += std::to_string(i); }
    void operator()(const std::string& s) const { out += '"' + escape(s) + '"'; }
    void operator()(const std::shared_ptr<Object>& o) const {
      if (o->members.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      for (std::size_t i = 0; i < o->members.size(); ++i) {
        if (i) out += ',';
        if (indent > 0) out += '\n';
        pad(depth + 1);
        out += '"' + escape(o->members[i].first) + "\":";
        if (indent > 0) out += ' ';
        dump(o->members[i].second, out, indent, depth + 1);
      }
      if (indent > 0) out += '\n';
      pad(depth);
      out += '}';
    }
    void operator()(const std::shared_ptr<Array>& a) const {
      if (a->empty()) {
        out += "[]";
        return;
      }
      out += '[';
      for (std::size_t i = 0; i < a->size(); ++i) {
        if (i) out += ',';
        if (indent > 0) out += '\n';
        pad(depth + 1);
        dump((*a)[i], out, indent, depth + 1);
      }
      if (indent > 0) out += '\n';
      pad(depth);
      out += ']';
    }
  };
  std::visit(Visitor{out, indent, depth}, value.v);
}

inline std::string dump(const Value& value, int indent = 2) {
  std::string out;
  dump(value, out, indent, 0);
  if (indent > 0) out += '\n';
  return out;
}

}  // namespace scalekit::json
