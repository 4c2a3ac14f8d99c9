#include "pubforge/pdfextract.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <variant>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <zlib.h>

#include "pubforge/common.hpp"
#include "pubforge/text.hpp"

namespace pubforge::pdf {

namespace {

// ---------------------------------------------------------------------------
// Object model

struct Object;
using Array = std::vector<Object>;
using Dict = std::map<std::string, Object>;

struct Name {
  std::string value;
};
struct Ref {
  int num = 0;
  int gen = 0;
};
struct Bytes {
  std::string value;
};
struct Stream {
  std::shared_ptr<Dict> dict;
  std::string raw;
};

struct Object {
  std::variant<std::monostate, bool, double, Bytes, Name, std::shared_ptr<Array>, std::shared_ptr<Dict>,
               Ref, Stream>
      value;

  bool is_null() const { return std::holds_alternative<std::monostate>(value); }
  const double* number() const { return std::get_if<double>(&value); }
  const Name* name() const { return std::get_if<Name>(&value); }
  const Bytes* bytes() const { return std::get_if<Bytes>(&value); }
  const Ref* ref() const { return std::get_if<Ref>(&value); }
  const Stream* stream() const { return std::get_if<Stream>(&value); }
  const Array* array() const {
    auto p = std::get_if<std::shared_ptr<Array>>(&value);
    return p ? p->get() : nullptr;
  }
  const Dict* dict() const {
    if (auto p = std::get_if<std::shared_ptr<Dict>>(&value)) return p->get();
    if (auto s = std::get_if<Stream>(&value)) return s->dict.get();
    return nullptr;
  }
};

Error unsupported(const std::string& what) { return Error(ErrorKind::unsupported, what); }
Error malformed(const std::string& what) { return Error(ErrorKind::parse, "malformed PDF: " + what); }

// ---------------------------------------------------------------------------
// Lexer

bool is_white(unsigned char c) {
  return c == 0 || c == '\t' || c == '\n' || c == '\f' || c == '\r' || c == ' ';
}
bool is_delim(unsigned char c) {
  return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' ||
         c == '}' || c == '/' || c == '%';
}
int hex_value(unsigned char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

enum class Tok { eof, number, string, name, keyword, array_open, array_close, dict_open, dict_close };

struct Token {
  Tok kind = Tok::eof;
  std::string text;
  double number = 0.0;
};

class Lexer {
public:
  explicit Lexer(std::string_view data, std::size_t pos = 0) : data_(data), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  std::string_view data() const { return data_; }

  void skip_space() {
    while (pos_ < data_.size()) {
      auto c = static_cast<unsigned char>(data_[pos_]);
      if (is_white(c)) {
        ++pos_;
      } else if (c == '%') {
        while (pos_ < data_.size() && data_[pos_] != '\n' && data_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  Token peek() {
    auto saved = pos_;
    Token t = next();
    pos_ = saved;
    return t;
  }

  Token next() {
    skip_space();
    Token t;
    if (pos_ >= data_.size()) return t;
    auto c = static_cast<unsigned char>(data_[pos_]);
    switch (c) {
    case '[': ++pos_; t.kind = Tok::array_open; return t;
    case ']': ++pos_; t.kind = Tok::array_close; return t;
    case '(': t.kind = Tok::string; t.text = literal_string(); return t;
    case '/': t.kind = Tok::name; t.text = name(); return t;
    case '<':
      if (pos_ + 1 < data_.size() && data_[pos_ + 1] == '<') {
        pos_ += 2;
        t.kind = Tok::dict_open;
        return t;
      }
      t.kind = Tok::string;
      t.text = hex_string();
      return t;
    case '>':
      if (pos_ + 1 < data_.size() && data_[pos_ + 1] == '>') {
        pos_ += 2;
        t.kind = Tok::dict_close;
        return t;
      }
      throw malformed("stray '>' at offset " + std::to_string(pos_));
    case '{': case '}': case ')':
      ++pos_;
      t.kind = Tok::keyword;
      t.text = std::string(1, static_cast<char>(c));
      return t;
    default: break;
    }
    auto start = pos_;
    while (pos_ < data_.size() && !is_white(static_cast<unsigned char>(data_[pos_])) &&
           !is_delim(static_cast<unsigned char>(data_[pos_])))
      ++pos_;
    std::string_view word = data_.substr(start, pos_ - start);
    if (is_number(word)) {
      t.kind = Tok::number;
      t.number = std::strtod(std::string(word).c_str(), nullptr);
      t.text = std::string(word);
    } else {
      t.kind = Tok::keyword;
      t.text = std::string(word);
    }
    return t;
  }

private:
  static bool is_number(std::string_view w) {
    if (w.empty()) return false;
    bool digit = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      char c = w[i];
      if (c >= '0' && c <= '9') digit = true;
      else if ((c == '+' || c == '-') && i == 0) continue;
      else if (c != '.') return false;
    }
    return digit;
  }

  std::string literal_string() {
    std::string out;
    ++pos_;
    int depth = 1;
    while (pos_ < data_.size()) {
      char c = data_[pos_++];
      if (c == '\\') {
        if (pos_ >= data_.size()) break;
        char e = data_[pos_++];
        switch (e) {
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case 't': out.push_back('\t'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '\r':
          if (pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
          break;
        case '\n': break;
        default:
          if (e >= '0' && e <= '7') {
            int v = e - '0';
            for (int k = 0; k < 2 && pos_ < data_.size() && data_[pos_] >= '0' && data_[pos_] <= '7'; ++k)
              v = v * 8 + (data_[pos_++] - '0');
            out.push_back(static_cast<char>(v & 0xFF));
          } else {
            out.push_back(e);
          }
        }
      } else if (c == '(') {
        ++depth;
        out.push_back(c);
      } else if (c == ')') {
        if (--depth == 0) return out;
        out.push_back(c);
      } else {
        out.push_back(c);
      }
    }
    throw malformed("unterminated string");
  }

  std::string hex_string() {
    ++pos_;
    std::string out;
    int high = -1;
    while (pos_ < data_.size() && data_[pos_] != '>') {
      int v = hex_value(static_cast<unsigned char>(data_[pos_++]));
      if (v < 0) continue;
      if (high < 0) {
        high = v;
      } else {
        out.push_back(static_cast<char>(high * 16 + v));
        high = -1;
      }
    }
    if (pos_ >= data_.size()) throw malformed("unterminated hex string");
    ++pos_;
    if (high >= 0) out.push_back(static_cast<char>(high * 16));
    return out;
  }

  std::string name() {
    ++pos_;
    std::string out;
    while (pos_ < data_.size() && !is_white(static_cast<unsigned char>(data_[pos_])) &&
           !is_delim(static_cast<unsigned char>(data_[pos_]))) {
      char c = data_[pos_++];
      if (c == '#' && pos_ + 1 < data_.size()) {
        int h = hex_value(static_cast<unsigned char>(data_[pos_]));
        int l = hex_value(static_cast<unsigned char>(data_[pos_ + 1]));
        if (h >= 0 && l >= 0) {
          out.push_back(static_cast<char>(h * 16 + l));
          pos_ += 2;
          continue;
        }
      }
      out.push_back(c);
    }
    return out;
  }

  std::string_view data_;
  std::size_t pos_;
};

// ---------------------------------------------------------------------------
// Parser

bool is_integer(double v) { return std::floor(v) == v && std::abs(v) < 1e9; }

class Parser {
public:
  explicit Parser(Lexer& lex) : lex_(lex) {}

  Object parse() { return parse_from(lex_.next()); }

  Object parse_from(const Token& t) {
    Object o;
    switch (t.kind) {
    case Tok::eof: throw malformed("unexpected end of data");
    case Tok::number: {
      if (is_integer(t.number)) {
        // "num gen R" reference lookahead.
        auto saved = lex_.pos();
        Token gen = lex_.next();
        if (gen.kind == Tok::number && is_integer(gen.number)) {
          Token r = lex_.next();
          if (r.kind == Tok::keyword && r.text == "R") {
            o.value = Ref{static_cast<int>(t.number), static_cast<int>(gen.number)};
            return o;
          }
        }
        lex_.seek(saved);
      }
      o.value = t.number;
      return o;
    }
    case Tok::string: o.value = Bytes{t.text}; return o;
    case Tok::name: o.value = Name{t.text}; return o;
    case Tok::array_open: {
      auto arr = std::make_shared<Array>();
      while (true) {
        Token n = lex_.next();
        if (n.kind == Tok::array_close) break;
        if (n.kind == Tok::eof) throw malformed("unterminated array");
        arr->push_back(parse_from(n));
      }
      o.value = arr;
      return o;
    }
    case Tok::dict_open: {
      auto dict = std::make_shared<Dict>();
      while (true) {
        Token k = lex_.next();
        if (k.kind == Tok::dict_close) break;
        if (k.kind != Tok::name) throw malformed("dictionary key is not a name");
        (*dict)[k.text] = parse();
      }
      o.value = dict;
      return o;
    }
    case Tok::keyword:
      if (t.text == "true") o.value = true;
      else if (t.text == "false") o.value = false;
      else if (t.text == "null") o.value = std::monostate{};
      else throw malformed("unexpected keyword '" + t.text + "'");
      return o;
    default: throw malformed("unexpected token");
    }
  }

private:
  Lexer& lex_;
};

// ---------------------------------------------------------------------------
// Stream decoding

std::string inflate_bytes(std::string_view in) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw Error(ErrorKind::io, "zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  std::array<char, 16384> buf{};
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break; // truncated but usable
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && rc != Z_BUF_ERROR) throw malformed("corrupt Flate stream");
  return out;
}

class Document {
public:
  explicit Document(std::string_view data) : data_(data) { load(); }

  const Object& resolve(const Object& o, int depth = 0) const {
    if (auto r = o.ref()) {
      if (depth > 32) throw malformed("reference chain too deep");
      auto it = objects_.find(r->num);
      if (it == objects_.end()) return null_;
      return resolve(it->second, depth + 1);
    }
    return o;
  }

  const Object& get(const Dict& d, const std::string& key) const {
    auto it = d.find(key);
    return it == d.end() ? null_ : resolve(it->second);
  }

  std::string decode(const Stream& s) const {
    const Object& filter = get(*s.dict, "Filter");
    std::vector<std::string> filters;
    if (auto n = filter.name()) filters.push_back(n->value);
    else if (auto a = filter.array())
      for (const auto& f : *a)
        if (auto n = resolve(f).name()) filters.push_back(n->value);
    const Object& parms = get(*s.dict, "DecodeParms");
    if (auto d = parms.dict()) {
      if (auto p = get(*d, "Predictor").number(); p && *p > 1)
        throw unsupported("unsupported stream predictor " + std::to_string(static_cast<int>(*p)));
    }
    std::string data = s.raw;
    for (const auto& f : filters) {
      if (f == "FlateDecode" || f == "Fl") data = inflate_bytes(data);
      else throw unsupported("unsupported stream filter /" + f);
    }
    return data;
  }

  const Dict& trailer() const { return trailer_; }

private:
  void load() {
    Lexer lex(data_);
    Parser parser(lex);
    std::vector<Stream> object_streams;
    while (true) {
      lex.skip_space();
      if (lex.pos() >= data_.size()) break;
      auto start = lex.pos();
      Token t = lex.next();
      if (t.kind == Tok::number && is_integer(t.number)) {
        Token gen = lex.next();
        Token kw = lex.next();
        if (gen.kind == Tok::number && kw.kind == Tok::keyword && kw.text == "obj") {
          Object o = parse_indirect(lex, parser);
          if (auto s = o.stream()) {
            const Object& type = get(*s->dict, "Type");
            if (type.name() && type.name()->value == "ObjStm") object_streams.push_back(*s);
            if (type.name() && type.name()->value == "XRef") merge_trailer(*s->dict);
          }
          objects_[static_cast<int>(t.number)] = std::move(o);
          continue;
        }
      } else if (t.kind == Tok::keyword && t.text == "trailer") {
        Object o = parser.parse();
        if (auto d = o.dict()) merge_trailer(*d);
        continue;
      }
      // xref tables, startxref, stray bytes: skip the line.
      lex.seek(start);
      skip_line(lex);
    }
    for (const auto& s : object_streams) load_object_stream(s);
  }

  void merge_trailer(const Dict& d) {
    for (const auto& [k, v] : d)
      if (!trailer_.count(k)) trailer_[k] = v;
  }

  void skip_line(Lexer& lex) {
    auto p = lex.pos();
    while (p < data_.size() && data_[p] != '\n' && data_[p] != '\r') ++p;
    while (p < data_.size() && (data_[p] == '\n' || data_[p] == '\r')) ++p;
    lex.seek(std::max(p, lex.pos() + 1));
  }

  Object parse_indirect(Lexer& lex, Parser& parser) {
    Object o = parser.parse();
    auto after = lex.pos();
    Token t = lex.next();
    if (t.kind == Tok::keyword && t.text == "stream") {
      auto p = lex.pos();
      if (p < data_.size() && data_[p] == '\r') ++p;
      if (p < data_.size() && data_[p] == '\n') ++p;
      std::size_t length = std::string::npos;
      if (auto d = o.dict()) {
        auto it = d->find("Length");
        if (it != d->end())
          if (auto n = it->second.number(); n && *n >= 0 && p + static_cast<std::size_t>(*n) <= data_.size())
            length = static_cast<std::size_t>(*n);
      }
      if (length != std::string::npos) {
        Lexer probe(data_, p + length);
        Token e = probe.next();
        if (!(e.kind == Tok::keyword && e.text == "endstream")) length = std::string::npos;
      }
      if (length == std::string::npos) {
        auto end = data_.find("endstream", p);
        if (end == std::string_view::npos) throw malformed("stream without endstream");
        length = end - p;
        while (length > 0 && (data_[p + length - 1] == '\n' || data_[p + length - 1] == '\r')) --length;
      }
      Stream s{std::make_shared<Dict>(o.dict() ? *o.dict() : Dict{}), std::string(data_.substr(p, length))};
      lex.seek(p + length);
      Token e = lex.next();
      if (!(e.kind == Tok::keyword && e.text == "endstream")) throw malformed("missing endstream");
      o.value = std::move(s);
      after = lex.pos();
      t = lex.next();
    }
    if (!(t.kind == Tok::keyword && t.text == "endobj")) lex.seek(after);
    return o;
  }

  void load_object_stream(const Stream& s) {
    std::string data = decode(s);
    const double* n = get(*s.dict, "N").number();
    const double* first = get(*s.dict, "First").number();
    if (!n || !first) throw malformed("object stream without /N or /First");
    Lexer header(data);
    std::vector<std::pair<int, std::size_t>> entries;
    for (int i = 0; i < static_cast<int>(*n); ++i) {
      Token num = header.next();
      Token off = header.next();
      if (num.kind != Tok::number || off.kind != Tok::number) throw malformed("object stream header");
      entries.emplace_back(static_cast<int>(num.number), static_cast<std::size_t>(off.number));
    }
    auto storage = std::make_shared<std::string>(std::move(data));
    stream_storage_.push_back(storage);
    for (const auto& [num, off] : entries) {
      if (objects_.count(num)) continue;
      Lexer lex(*storage, static_cast<std::size_t>(*first) + off);
      Parser p(lex);
      objects_[num] = p.parse();
    }
  }

  std::string_view data_;
  std::map<int, Object> objects_;
  std::vector<std::shared_ptr<std::string>> stream_storage_;
  Dict trailer_;
  Object null_;
};

// ---------------------------------------------------------------------------
// Fonts

struct CodespaceRange {
  std::string lo, hi;
};

std::u32string utf16be_to_u32(std::string_view bytes) {
  std::u32string out;
  for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) {
    char32_t u = (static_cast<unsigned char>(bytes[i]) << 8) | static_cast<unsigned char>(bytes[i + 1]);
    if (u >= 0xD800 && u <= 0xDBFF && i + 3 < bytes.size()) {
      char32_t lo = (static_cast<unsigned char>(bytes[i + 2]) << 8) | static_cast<unsigned char>(bytes[i + 3]);
      if (lo >= 0xDC00 && lo <= 0xDFFF) {
        out.push_back(0x10000 + ((u - 0xD800) << 10) + (lo - 0xDC00));
        i += 2;
        continue;
      }
    }
    out.push_back(u);
  }
  return out;
}

std::string increment_code(std::string code, unsigned by) {
  unsigned carry = by;
  for (auto i = code.size(); i-- > 0 && carry;) {
    unsigned v = static_cast<unsigned char>(code[i]) + carry;
    code[i] = static_cast<char>(v & 0xFF);
    carry = v >> 8;
  }
  return code;
}

unsigned long code_value(std::string_view code) {
  unsigned long v = 0;
  for (char c : code) v = (v << 8) | static_cast<unsigned char>(c);
  return v;
}

struct FontDecoder {
  FontMap map;
  std::vector<CodespaceRange> codespace;
  bool composite = false;
  std::array<char32_t, 256> base{};
  bool has_base = false;

  std::size_t code_length_at(std::string_view s, std::size_t i) const {
    for (const auto& r : codespace) {
      if (i + r.lo.size() > s.size()) continue;
      bool ok = true;
      for (std::size_t k = 0; k < r.lo.size() && ok; ++k) {
        auto b = static_cast<unsigned char>(s[i + k]);
        ok = b >= static_cast<unsigned char>(r.lo[k]) && b <= static_cast<unsigned char>(r.hi[k]);
      }
      if (ok) return r.lo.size();
    }
    if (codespace.empty() && !map.code_lengths.empty() && !composite) {
      // No codespace: prefer the longest mapped code present at i.
      for (auto it = map.code_lengths.rbegin(); it != map.code_lengths.rend(); ++it) {
        auto len = static_cast<std::size_t>(*it);
        if (i + len <= s.size() && map.code_to_unicode.count(std::string(s.substr(i, len)))) return len;
      }
    }
    return composite ? 2 : 1;
  }

  std::string decode(std::string_view s) const {
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
      std::size_t len = std::min(code_length_at(s, i), s.size() - i);
      std::string code(s.substr(i, len));
      i += len;
      if (auto it = map.code_to_unicode.find(code); it != map.code_to_unicode.end()) {
        out += it->second;
      } else if (len == 1) {
        auto b = static_cast<unsigned char>(code[0]);
        char32_t c = has_base && base[b] ? base[b] : standard_encoding(b);
        text::append_utf8(out, c);
      } else {
        text::append_utf8(out, U'�');
      }
    }
    return out;
  }
};

char32_t compose(char32_t base, char32_t mark) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) return U'�';
  UChar32 c = nfc->composePair(static_cast<UChar32>(base), static_cast<UChar32>(mark));
  return c < 0 ? U'�' : static_cast<char32_t>(c);
}

// Glyph names from /Differences arrays: uniXXXX, uXXXX[XX], ASCII letters,
// common punctuation, and letter+accent names composed through NFC.
char32_t glyph_to_unicode(const std::string& name) {
  static const std::map<std::string, char32_t> named = {
      {"space", U' '}, {"exclam", U'!'}, {"quotedbl", U'"'}, {"numbersign", U'#'}, {"dollar", U'$'},
      {"percent", U'%'}, {"ampersand", U'&'}, {"quoteright", U'’'}, {"quotesingle", U'\''},
      {"parenleft", U'('}, {"parenright", U')'}, {"asterisk", U'*'}, {"plus", U'+'}, {"comma", U','},
      {"hyphen", U'-'}, {"period", U'.'}, {"slash", U'/'}, {"zero", U'0'}, {"one", U'1'},
      {"two", U'2'}, {"three", U'3'}, {"four", U'4'}, {"five", U'5'}, {"six", U'6'},
      {"seven", U'7'}, {"eight", U'8'}, {"nine", U'9'}, {"colon", U':'}, {"semicolon", U';'},
      {"less", U'<'}, {"equal", U'='}, {"greater", U'>'}, {"question", U'?'}, {"at", U'@'},
      {"bracketleft", U'['}, {"backslash", U'\\'}, {"bracketright", U']'}, {"underscore", U'_'},
      {"quoteleft", U'‘'}, {"grave", U'`'}, {"braceleft", U'{'}, {"bar", U'|'},
      {"braceright", U'}'}, {"asciitilde", U'~'}, {"dagger", U'†'}, {"daggerdbl", U'‡'},
      {"endash", U'–'}, {"emdash", U'—'}, {"fi", U'ﬁ'}, {"fl", U'ﬂ'},
      {"dieresis", U'¨'}, {"acute", U'´'}, {"germandbls", U'ß'},
      {"dotlessi", U'ı'}, {"lslash", U'ł'}, {"Lslash", U'Ł'}, {"oslash", U'ø'},
      {"Oslash", U'Ø'}, {"ae", U'æ'}, {"AE", U'Æ'}, {"oe", U'œ'}, {"OE", U'Œ'}};
  static const std::map<std::string, char32_t> accents = {
      {"acute", 0x301}, {"grave", 0x300}, {"circumflex", 0x302}, {"dieresis", 0x308},
      {"tilde", 0x303}, {"ring", 0x30A}, {"cedilla", 0x327}, {"caron", 0x30C}, {"ogonek", 0x328},
      {"macron", 0x304}, {"breve", 0x306}, {"dotaccent", 0x307}, {"hungarumlaut", 0x30B}};

  if (auto it = named.find(name); it != named.end()) return it->second;
  if (name.size() == 1 && std::isalpha(static_cast<unsigned char>(name[0]))) return static_cast<char32_t>(name[0]);
  auto hex = [](std::string_view h) -> std::optional<char32_t> {
    unsigned long v = 0;
    auto [p, ec] = std::from_chars(h.data(), h.data() + h.size(), v, 16);
    if (ec != std::errc{} || p != h.data() + h.size()) return std::nullopt;
    return static_cast<char32_t>(v);
  };
  if (name.size() == 7 && starts_with(name, "uni"))
    if (auto v = hex(std::string_view(name).substr(3))) return *v;
  if ((name.size() == 5 || name.size() == 7) && name[0] == 'u')
    if (auto v = hex(std::string_view(name).substr(1))) return *v;
  if (name.size() > 1 && std::isalpha(static_cast<unsigned char>(name[0]))) {
    auto it = accents.find(name.substr(1));
    if (it != accents.end()) return compose(static_cast<char32_t>(name[0]), it->second);
  }
  return U'�';
}

std::vector<CodespaceRange> parse_codespace(std::string_view cmap) {
  std::vector<CodespaceRange> out;
  Lexer lex(cmap);
  std::vector<Token> operands;
  while (true) {
    Token t = lex.next();
    if (t.kind == Tok::eof) break;
    if (t.kind == Tok::keyword && t.text == "begincodespacerange") {
      while (true) {
        Token lo = lex.next();
        if (lo.kind != Tok::string) break;
        Token hi = lex.next();
        if (hi.kind != Tok::string || hi.text.size() != lo.text.size()) throw malformed("codespacerange");
        out.push_back({lo.text, hi.text});
      }
    }
  }
  return out;
}

FontDecoder load_font(const Document& doc, const std::string& resource_name, const Dict& font) {
  FontDecoder dec;
  dec.map.font_resource_name = resource_name;
  if (auto st = doc.get(font, "Subtype").name()) dec.composite = st->value == "Type0";

  const Object& enc = doc.get(font, "Encoding");
  auto apply_base = [&](const std::string& name) {
    if (name == "StandardEncoding") return; // default fallback already
    if (name == "Identity-H" || name == "Identity-V") {
      dec.composite = true;
      return;
    }
    if (name != "WinAnsiEncoding" && name != "MacRomanEncoding" && name != "PDFDocEncoding")
      return;
    // The ASCII part of these agrees with Latin-1; the high half differs per
    // table and is not modelled beyond Latin-1.
    dec.has_base = true;
    for (int c = 0; c < 256; ++c) dec.base[c] = c >= 0x20 && c != 0x7F ? static_cast<char32_t>(c) : U'�';
  };
  if (auto n = enc.name()) {
    apply_base(n->value);
  } else if (auto d = enc.dict()) {
    if (auto b = doc.get(*d, "BaseEncoding").name()) apply_base(b->value);
    if (auto diffs = doc.get(*d, "Differences").array()) {
      if (!dec.has_base) {
        dec.has_base = true;
        for (int c = 0; c < 256; ++c) dec.base[c] = standard_encoding(static_cast<std::uint8_t>(c));
      }
      int code = 0;
      for (const auto& item : *diffs) {
        const Object& o = doc.resolve(item);
        if (auto n = o.number()) code = static_cast<int>(*n);
        else if (auto g = o.name()) {
          if (code >= 0 && code < 256) dec.base[code] = glyph_to_unicode(g->value);
          ++code;
        }
      }
    }
  }

  if (auto s = doc.get(font, "ToUnicode").stream()) {
    std::string cmap = doc.decode(*s);
    dec.map = parse_to_unicode(cmap, resource_name);
    dec.codespace = parse_codespace(cmap);
  }
  return dec;
}

// ---------------------------------------------------------------------------
// Content interpretation

struct Matrix {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

  Matrix operator*(const Matrix& m) const {
    return {a * m.a + b * m.c,       a * m.b + b * m.d,       c * m.a + d * m.c,
            c * m.b + d * m.d,       e * m.a + f * m.c + m.e, e * m.b + f * m.d + m.f};
  }
};

struct Fragment {
  double x, y;
  std::size_t seq;
  std::string text;
};

class ContentInterpreter {
public:
  ContentInterpreter(const Document& doc, const Dict* resources) : doc_(doc), resources_(resources) {}

  std::vector<Fragment> run(std::string_view content) {
    Lexer lex(content);
    Parser parser(lex);
    std::vector<Object> operands;
    while (true) {
      Token t = lex.next();
      if (t.kind == Tok::eof) break;
      if (t.kind == Tok::keyword && t.text != "true" && t.text != "false" && t.text != "null") {
        if (t.text == "BI") {
          skip_inline_image(lex);
        } else {
          op(t.text, operands);
        }
        operands.clear();
        continue;
      }
      if (t.kind == Tok::array_close || t.kind == Tok::dict_close) continue;
      operands.push_back(parser.parse_from(t));
    }
    flush();
    return std::move(fragments_);
  }

private:
  double num(const std::vector<Object>& ops, std::size_t i) const {
    if (i >= ops.size()) return 0.0;
    auto n = ops[i].number();
    return n ? *n : 0.0;
  }

  void skip_inline_image(Lexer& lex) {
    auto data = lex.data();
    auto p = data.find("ID", lex.pos());
    if (p == std::string_view::npos) {
      lex.seek(data.size());
      return;
    }
    p += 3;
    while (p + 2 <= data.size()) {
      auto e = data.find("EI", p);
      if (e == std::string_view::npos) break;
      bool before = e == 0 || is_white(static_cast<unsigned char>(data[e - 1]));
      bool after = e + 2 >= data.size() || is_white(static_cast<unsigned char>(data[e + 2]));
      if (before && after) {
        lex.seek(e + 2);
        return;
      }
      p = e + 2;
    }
    lex.seek(data.size());
  }

  void move_text(double tx, double ty) {
    line_matrix_ = Matrix{1, 0, 0, 1, tx, ty} * line_matrix_;
    text_matrix_ = line_matrix_;
    flush();
  }

  void op(const std::string& name, const std::vector<Object>& ops) {
    if (name == "q") {
      ctm_stack_.push_back(ctm_);
    } else if (name == "Q") {
      if (!ctm_stack_.empty()) {
        ctm_ = ctm_stack_.back();
        ctm_stack_.pop_back();
      }
      flush();
    } else if (name == "cm") {
      ctm_ = Matrix{num(ops, 0), num(ops, 1), num(ops, 2), num(ops, 3), num(ops, 4), num(ops, 5)} * ctm_;
      flush();
    } else if (name == "BT") {
      text_matrix_ = line_matrix_ = Matrix{};
      flush();
    } else if (name == "ET") {
      flush();
    } else if (name == "Tf") {
      if (!ops.empty())
        if (auto n = ops[0].name()) select_font(n->value);
    } else if (name == "TL") {
      leading_ = num(ops, 0);
    } else if (name == "Td") {
      move_text(num(ops, 0), num(ops, 1));
    } else if (name == "TD") {
      leading_ = -num(ops, 1);
      move_text(num(ops, 0), num(ops, 1));
    } else if (name == "Tm") {
      text_matrix_ = line_matrix_ =
          Matrix{num(ops, 0), num(ops, 1), num(ops, 2), num(ops, 3), num(ops, 4), num(ops, 5)};
      flush();
    } else if (name == "T*") {
      move_text(0, -leading_);
    } else if (name == "Tj") {
      if (!ops.empty()) show(ops[0]);
    } else if (name == "'") {
      move_text(0, -leading_);
      if (!ops.empty()) show(ops.back());
    } else if (name == "\"") {
      move_text(0, -leading_);
      if (ops.size() >= 3) show(ops[2]);
    } else if (name == "TJ") {
      if (ops.empty()) return;
      if (auto arr = ops[0].array()) {
        for (const auto& item : *arr) {
          if (auto n = item.number()) {
            if (*n < -kWordGap) pending_ += ' ';
          } else {
            show(item);
          }
        }
      }
    }
  }

  void select_font(const std::string& resource) {
    auto it = fonts_.find(resource);
    if (it == fonts_.end()) {
      FontDecoder dec;
      dec.map.font_resource_name = resource;
      if (resources_) {
        if (auto fonts = doc_.get(*resources_, "Font").dict())
          if (auto font = doc_.get(*fonts, resource).dict()) dec = load_font(doc_, resource, *font);
      }
      it = fonts_.emplace(resource, std::move(dec)).first;
    }
    font_ = &it->second;
  }

  void show(const Object& operand) {
    auto b = operand.bytes();
    if (!b) return;
    if (pending_.empty()) {
      Matrix m = text_matrix_ * ctm_;
      pending_x_ = m.e;
      pending_y_ = m.f;
    }
    if (font_) {
      pending_ += font_->decode(b->value);
    } else {
      for (char c : b->value) text::append_utf8(pending_, standard_encoding(static_cast<std::uint8_t>(c)));
    }
  }

  void flush() {
    if (!pending_.empty()) fragments_.push_back({pending_x_, pending_y_, seq_++, std::move(pending_)});
    pending_.clear();
  }

  static constexpr double kWordGap = 200.0;

  const Document& doc_;
  const Dict* resources_;
  std::map<std::string, FontDecoder> fonts_;
  const FontDecoder* font_ = nullptr;
  Matrix ctm_, text_matrix_, line_matrix_;
  std::vector<Matrix> ctm_stack_;
  double leading_ = 0.0;
  std::string pending_;
  double pending_x_ = 0.0, pending_y_ = 0.0;
  std::size_t seq_ = 0;
  std::vector<Fragment> fragments_;
};

void collect_pages(const Document& doc, const Object& node_ref, const Dict* inherited,
                   std::set<const Dict*>& seen, std::vector<std::pair<const Dict*, const Dict*>>& out) {
  const Dict* node = doc.resolve(node_ref).dict();
  if (!node) throw malformed("page tree node is not a dictionary");
  if (!seen.insert(node).second) throw malformed("cycle in page tree");
  const Dict* resources = doc.get(*node, "Resources").dict();
  if (!resources) resources = inherited;
  const Object& type = doc.get(*node, "Type");
  const Object& kids = doc.get(*node, "Kids");
  if (kids.array() && !(type.name() && type.name()->value == "Page")) {
    for (const auto& kid : *kids.array()) collect_pages(doc, kid, resources, seen, out);
  } else {
    out.emplace_back(node, resources);
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Public interface

char32_t standard_encoding(std::uint8_t code) {
  if (code == 0x27) return U'’';
  if (code == 0x60) return U'‘';
  if (code >= 0x20 && code <= 0x7E) return code;
  static const std::map<std::uint8_t, char32_t> high = {
      {0xA1, 0x00A1}, {0xA2, 0x00A2}, {0xA3, 0x00A3}, {0xA4, 0x2044}, {0xA5, 0x00A5}, {0xA6, 0x0192},
      {0xA7, 0x00A7}, {0xA8, 0x00A4}, {0xA9, 0x0027}, {0xAA, 0x201C}, {0xAB, 0x00AB}, {0xAC, 0x2039},
      {0xAD, 0x203A}, {0xAE, 0xFB01}, {0xAF, 0xFB02}, {0xB1, 0x2013}, {0xB2, 0x2020}, {0xB3, 0x2021},
      {0xB4, 0x00B7}, {0xB6, 0x00B6}, {0xB7, 0x2022}, {0xB8, 0x201A}, {0xB9, 0x201E}, {0xBA, 0x201D},
      {0xBB, 0x00BB}, {0xBC, 0x2026}, {0xBD, 0x2030}, {0xBF, 0x00BF}, {0xC1, 0x0060}, {0xC2, 0x00B4},
      {0xC3, 0x02C6}, {0xC4, 0x02DC}, {0xC5, 0x00AF}, {0xC6, 0x02D8}, {0xC7, 0x02D9}, {0xC8, 0x00A8},
      {0xCA, 0x02DA}, {0xCB, 0x00B8}, {0xCD, 0x02DD}, {0xCE, 0x02DB}, {0xCF, 0x02C7}, {0xD0, 0x2014},
      {0xE1, 0x00C6}, {0xE3, 0x00AA}, {0xE8, 0x0141}, {0xE9, 0x00D8}, {0xEA, 0x0152}, {0xEB, 0x00BA},
      {0xF1, 0x00E6}, {0xF5, 0x0131}, {0xF8, 0x0142}, {0xF9, 0x00F8}, {0xFA, 0x0153}, {0xFB, 0x00DF}};
  auto it = high.find(code);
  return it == high.end() ? U'�' : it->second;
}

FontMap parse_to_unicode(std::string_view cmap, std::string font_resource_name) {
  FontMap map;
  map.font_resource_name = std::move(font_resource_name);
  std::set<int> lengths;
  for (const auto& r : parse_codespace(cmap)) lengths.insert(static_cast<int>(r.lo.size()));

  auto dest = [](const Token& t) { return text::to_utf8(utf16be_to_u32(t.text)); };
  Lexer lex(cmap);
  while (true) {
    Token t = lex.next();
    if (t.kind == Tok::eof) break;
    if (t.kind != Tok::keyword) continue;
    if (t.text == "beginbfchar") {
      while (true) {
        Token src = lex.next();
        if (src.kind != Tok::string) break;
        Token dst = lex.next();
        if (dst.kind == Tok::string) {
          map.code_to_unicode[src.text] = dest(dst);
        } else if (dst.kind == Tok::name) {
          std::string s;
          text::append_utf8(s, glyph_to_unicode(dst.text));
          map.code_to_unicode[src.text] = s;
        } else {
          throw malformed("bfchar destination");
        }
        lengths.insert(static_cast<int>(src.text.size()));
      }
    } else if (t.text == "beginbfrange") {
      while (true) {
        Token lo = lex.next();
        if (lo.kind != Tok::string) break;
        Token hi = lex.next();
        if (hi.kind != Tok::string || hi.text.size() != lo.text.size()) throw malformed("bfrange bounds");
        unsigned long count = code_value(hi.text) - code_value(lo.text) + 1;
        if (code_value(hi.text) < code_value(lo.text) || count > 65536) throw malformed("bfrange span");
        lengths.insert(static_cast<int>(lo.text.size()));
        Token dst = lex.next();
        if (dst.kind == Tok::string) {
          // Increment the last UTF-16 unit of the destination per code.
          std::string base = dst.text;
          for (unsigned long k = 0; k < count; ++k) {
            std::string d = base;
            if (d.size() >= 2) {
              unsigned v = (static_cast<unsigned char>(d[d.size() - 2]) << 8) |
                           static_cast<unsigned char>(d[d.size() - 1]);
              v += static_cast<unsigned>(k);
              d[d.size() - 2] = static_cast<char>((v >> 8) & 0xFF);
              d[d.size() - 1] = static_cast<char>(v & 0xFF);
            }
            map.code_to_unicode[increment_code(lo.text, static_cast<unsigned>(k))] =
                text::to_utf8(utf16be_to_u32(d));
          }
        } else if (dst.kind == Tok::array_open) {
          unsigned long k = 0;
          while (true) {
            Token item = lex.next();
            if (item.kind == Tok::array_close) break;
            if (item.kind != Tok::string) throw malformed("bfrange array entry");
            if (k < count) map.code_to_unicode[increment_code(lo.text, static_cast<unsigned>(k))] = dest(item);
            ++k;
          }
        } else {
          throw malformed("bfrange destination");
        }
      }
    }
  }
  map.code_lengths.assign(lengths.begin(), lengths.end());
  if (map.code_lengths.empty()) map.code_lengths = {1};
  return map;
}

bool looks_like_pdf(std::span<const std::uint8_t> bytes) {
  static constexpr std::string_view magic = "%PDF-";
  auto n = std::min<std::size_t>(bytes.size(), 1024);
  std::string_view head(reinterpret_cast<const char*>(bytes.data()), n);
  return head.find(magic) != std::string_view::npos;
}

std::vector<TextLine> merge_lines(const std::vector<TextLine>& fragments) {
  std::vector<std::pair<long long, TextLine>> lines;
  for (const auto& f : fragments) {
    long long key = std::llround(f.y / kLineQuantum);
    auto it = std::find_if(lines.begin(), lines.end(), [&](const auto& l) { return l.first == key; });
    if (it == lines.end()) {
      lines.push_back({key, TextLine{static_cast<double>(key) * kLineQuantum, f.text}});
      continue;
    }
    std::string& t = it->second.text;
    if (!t.empty() && !f.text.empty() && t.back() != ' ' && f.text.front() != ' ') t += ' ';
    t += f.text;
  }
  std::stable_sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<TextLine> out;
  for (auto& [key, line] : lines) {
    line.text = trim(line.text);
    if (!line.text.empty()) out.push_back(std::move(line));
  }
  return out;
}

std::vector<PageText> extract_text(std::span<const std::uint8_t> pdf_bytes) {
  std::string_view data(reinterpret_cast<const char*>(pdf_bytes.data()), pdf_bytes.size());
  if (!starts_with(data, "%PDF-")) throw unsupported("unsupported container");
  std::string version(data.substr(5, 3));
  if (version < "1.4" || version > "1.7" || version.size() != 3 || version[1] != '.')
    throw unsupported("unsupported PDF version " + version);

  Document doc(data);
  if (doc.trailer().count("Encrypt")) throw unsupported("encryption unsupported");

  const Dict* catalog = nullptr;
  if (auto it = doc.trailer().find("Root"); it != doc.trailer().end()) catalog = doc.resolve(it->second).dict();
  if (!catalog) throw malformed("no document catalog");
  auto pages_it = catalog->find("Pages");
  if (pages_it == catalog->end()) throw malformed("catalog without /Pages");

  std::vector<std::pair<const Dict*, const Dict*>> leaves;
  std::set<const Dict*> seen;
  collect_pages(doc, pages_it->second, nullptr, seen, leaves);

  std::vector<PageText> pages;
  int number = 0;
  for (const auto& [page, resources] : leaves) {
    std::string content;
    const Object& contents = doc.get(*page, "Contents");
    if (auto s = contents.stream()) {
      content = doc.decode(*s);
    } else if (auto arr = contents.array()) {
      for (const auto& part : *arr)
        if (auto s = doc.resolve(part).stream()) {
          content += doc.decode(*s);
          content += '\n';
        }
    }
    ContentInterpreter interp(doc, resources);
    auto fragments = interp.run(content);
    std::stable_sort(fragments.begin(), fragments.end(), [](const Fragment& a, const Fragment& b) {
      if (a.x != b.x) return a.x < b.x;
      return a.seq < b.seq;
    });
    std::vector<TextLine> raw;
    raw.reserve(fragments.size());
    for (auto& f : fragments) raw.push_back({f.y, std::move(f.text)});
    pages.push_back(PageText{++number, merge_lines(raw)});
  }
  return pages;
}

std::vector<PageText> load_pretokenized(std::string_view text) {
  std::vector<PageText> pages;
  std::vector<TextLine> current;
  double next_y = 1000.0;
  auto finish = [&] {
    pages.push_back(PageText{static_cast<int>(pages.size()) + 1, merge_lines(current)});
    current.clear();
    next_y = 1000.0;
  };
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "\f") {
      finish();
      continue;
    }
    if (starts_with(line, "y=")) {
      auto bar = line.find('|');
      std::string number = bar == std::string::npos ? std::string{} : line.substr(2, bar - 2);
      double y = 0.0;
      auto [p, ec] = std::from_chars(number.data(), number.data() + number.size(), y);
      if (number.empty() || ec != std::errc{} || p != number.data() + number.size())
        throw Error(ErrorKind::parse, "line " + std::to_string(i + 1) + ": malformed y prefix");
      current.push_back({y, line.substr(bar + 1)});
      next_y = y - 1.0;
      continue;
    }
    if (trim(line).empty()) continue;
    current.push_back({next_y, line});
    next_y -= 1.0;
  }
  finish();
  return pages;
}

} // namespace pubforge::pdf
