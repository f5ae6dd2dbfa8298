#include "noisychannel/bridge/protocol.h"

#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <limits>

namespace nc::bridge {
namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void seq(const TokenSequence& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (TokenId t : s) u32(static_cast<std::uint32_t>(t));
  }
  void tlv(std::uint8_t t, const Writer& value) {
    u8(t);
    u32(static_cast<std::uint32_t>(value.out_.size()));
    out_.insert(out_.end(), value.out_.begin(), value.out_.end());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, std::optional<std::uint64_t> id) : in_(in), id_(id) {}

  bool done() const { return pos_ == in_.size(); }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto b = take(4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
  }
  std::uint64_t u64() {
    const std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  double f64() { return std::bit_cast<double>(u64()); }
  TokenId token() {
    const std::uint32_t v = u32();
    if (v > static_cast<std::uint32_t>(std::numeric_limits<TokenId>::max()))
      fail("token id out of range");
    return static_cast<TokenId>(v);
  }
  TokenSequence seq() {
    const std::uint32_t n = u32();
    if (n > (in_.size() - pos_) / 4) fail("sequence length exceeds value");
    TokenSequence s(n);
    for (auto& t : s) t = token();
    return s;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (in_.size() - pos_ < n) fail("truncated frame");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_done(const char* what) {
    if (!done()) fail(std::string("trailing bytes in ") + what);
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ProtocolError(msg, id_); }

 private:
  std::span<const std::uint8_t> in_;
  std::optional<std::uint64_t> id_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> header(FrameType type, Writer&& tlvs) {
  auto body = tlvs.take();
  body.insert(body.begin(), {kProtocolVersion, static_cast<std::uint8_t>(type)});
  return body;
}

Writer id_method(std::uint64_t id, Method m) {
  Writer w, v;
  v.u64(id);
  w.tlv(tag::kId, v);
  Writer mv;
  mv.u8(static_cast<std::uint8_t>(m));
  w.tlv(tag::kMethod, mv);
  return w;
}

struct Tlv {
  std::uint8_t tag;
  std::span<const std::uint8_t> value;
};

Method parse_method(std::span<const std::uint8_t> v, std::optional<std::uint64_t> id) {
  Reader r(v, id);
  const std::uint8_t m = r.u8();
  r.expect_done("method");
  if (m < 1 || m > 3) throw ProtocolError("unknown method " + std::to_string(m), id);
  return static_cast<Method>(m);
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::kLmSeq: return "lm_seq";
    case Method::kChannel: return "channel";
    case Method::kDirectTopk: return "direct_topk";
  }
  return "unknown";
}

std::vector<std::uint8_t> encode(const Request& r) {
  Writer w = id_method(r.id, r.method);
  for (const auto& item : r.items) {
    Writer v;
    switch (r.method) {
      case Method::kLmSeq:
        v.seq(item.target);
        break;
      case Method::kChannel:
        v.seq(item.source);
        v.seq(item.target);
        break;
      case Method::kDirectTopk:
        v.seq(item.source);
        v.seq(item.target);
        v.u32(item.k);
        break;
    }
    w.tlv(tag::kItem, v);
  }
  return header(FrameType::kRequest, std::move(w));
}

std::vector<std::uint8_t> encode(const Response& r) {
  Writer w = id_method(r.id, r.method);
  if (r.method == Method::kDirectTopk) {
    for (const auto& top : r.topk) {
      Writer v;
      v.u32(static_cast<std::uint32_t>(top.size()));
      for (const auto& [token, lp] : top) {
        v.u32(static_cast<std::uint32_t>(token));
        v.f64(lp);
      }
      w.tlv(tag::kResult, v);
    }
  } else {
    for (double value : r.values) {
      Writer v;
      v.f64(value);
      w.tlv(tag::kResult, v);
    }
  }
  return header(FrameType::kResponse, std::move(w));
}

std::vector<std::uint8_t> encode(const ErrorReply& r) {
  Writer w;
  if (r.id) {
    Writer v;
    v.u64(*r.id);
    w.tlv(tag::kId, v);
  }
  Writer m;
  for (char c : r.message) m.u8(static_cast<std::uint8_t>(c));
  w.tlv(tag::kMessage, m);
  return header(FrameType::kError, std::move(w));
}

std::vector<std::uint8_t> encode_shutdown() { return header(FrameType::kShutdown, Writer{}); }

Frame decode(std::span<const std::uint8_t> body) {
  if (body.size() < 2) throw ProtocolError("frame shorter than its header", std::nullopt);
  if (body[0] != kProtocolVersion)
    throw ProtocolError("unsupported protocol version " + std::to_string(body[0]), std::nullopt);
  const std::uint8_t type = body[1];

  std::vector<Tlv> tlvs;
  std::optional<std::uint64_t> id;
  Reader r(body.subspan(2), std::nullopt);
  try {
    while (!r.done()) {
      const std::uint8_t t = r.u8();
      const std::uint32_t len = r.u32();
      tlvs.push_back({t, r.take(len)});
      if (t == tag::kId && !id && len == 8) id = Reader(tlvs.back().value, std::nullopt).u64();
    }
  } catch (const ProtocolError& e) {
    throw ProtocolError(e.what(), id);
  }
  auto fail = [&](const std::string& msg) -> ProtocolError { return ProtocolError(msg, id); };

  std::optional<Method> method;
  std::vector<std::span<const std::uint8_t>> items, results;
  std::optional<std::string> message;
  int id_count = 0;
  for (const auto& tlv : tlvs) {
    switch (tlv.tag) {
      case tag::kId:
        if (tlv.value.size() != 8) throw fail("id must be 8 bytes");
        ++id_count;
        break;
      case tag::kMethod:
        if (method) throw fail("duplicate method");
        method = parse_method(tlv.value, id);
        break;
      case tag::kItem: items.push_back(tlv.value); break;
      case tag::kResult: results.push_back(tlv.value); break;
      case tag::kMessage:
        message = std::string(tlv.value.begin(), tlv.value.end());
        break;
      default: throw fail("unknown tag " + std::to_string(tlv.tag));
    }
  }
  if (id_count > 1) throw fail("duplicate id");

  switch (static_cast<FrameType>(type)) {
    case FrameType::kRequest: {
      if (!id) throw fail("request without id");
      if (!method) throw fail("request without method");
      if (!results.empty() || message) throw fail("unexpected field in request");
      Request req{*id, *method, {}};
      for (auto v : items) {
        Reader ir(v, id);
        RequestItem item;
        if (*method != Method::kLmSeq) item.source = ir.seq();
        item.target = ir.seq();
        if (*method == Method::kDirectTopk) item.k = ir.u32();
        ir.expect_done("item");
        req.items.push_back(std::move(item));
      }
      return req;
    }
    case FrameType::kResponse: {
      if (!id) throw fail("response without id");
      if (!method) throw fail("response without method");
      if (!items.empty() || message) throw fail("unexpected field in response");
      Response resp{*id, *method, {}, {}};
      for (auto v : results) {
        Reader rr(v, id);
        if (*method == Method::kDirectTopk) {
          const std::uint32_t n = rr.u32();
          if (n > v.size() / 12) throw fail("top-k count exceeds value");
          TopK top;
          top.reserve(n);
          for (std::uint32_t i = 0; i < n; ++i) {
            const TokenId t = rr.token();
            top.emplace_back(t, rr.f64());
          }
          resp.topk.push_back(std::move(top));
        } else {
          resp.values.push_back(rr.f64());
        }
        rr.expect_done("result");
      }
      return resp;
    }
    case FrameType::kError:
      if (!message) throw fail("error frame without message");
      return ErrorReply{id, *message};
    case FrameType::kShutdown:
      return Shutdown{};
  }
  throw fail("unknown frame type " + std::to_string(type));
}

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  bool socket = true;
  while (n > 0) {
    ssize_t w = socket ? ::send(fd, data, n, MSG_NOSIGNAL) : ::write(fd, data, n);
    if (w < 0 && socket && errno == ENOTSOCK) {
      socket = false;
      continue;
    }
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) throw TransportError(std::string("write failed: ") + std::strerror(errno));
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns the number of bytes read; short only at end of stream.
std::size_t read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::read(fd, data + got, n - got);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw TransportError(std::string("read failed: ") + std::strerror(errno));
    if (r == 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

}  // namespace

void write_frame(int fd, std::span<const std::uint8_t> body) {
  if (body.size() > kMaxFrameBytes) throw TransportError("frame too large");
  std::vector<std::uint8_t> buf;
  buf.reserve(body.size() + 4);
  const auto n = static_cast<std::uint32_t>(body.size());
  for (int shift = 24; shift >= 0; shift -= 8) buf.push_back(static_cast<std::uint8_t>(n >> shift));
  buf.insert(buf.end(), body.begin(), body.end());
  write_all(fd, buf.data(), buf.size());
}

std::optional<std::vector<std::uint8_t>> read_frame(int fd) {
  std::uint8_t len_bytes[4];
  const std::size_t got = read_all(fd, len_bytes, 4);
  if (got == 0) return std::nullopt;
  if (got < 4) throw TransportError("connection closed inside a frame header");
  const std::uint32_t len = (std::uint32_t{len_bytes[0]} << 24) | (std::uint32_t{len_bytes[1]} << 16) |
                            (std::uint32_t{len_bytes[2]} << 8) | std::uint32_t{len_bytes[3]};
  if (len > kMaxFrameBytes) throw TransportError("frame length " + std::to_string(len) + " exceeds limit");
  std::vector<std::uint8_t> body(len);
  if (read_all(fd, body.data(), len) < len) throw TransportError("connection closed inside a frame");
  return body;
}

Endpoint Endpoint::parse(const std::string& text) {
  Endpoint e;
  if (text == "stdio") return e;
  if (text.rfind("stdio:", 0) == 0) {
    e.command = text.substr(6);
    if (e.command.empty()) throw ArgumentError("empty command in endpoint '" + text + "'");
    return e;
  }
  if (text.rfind("tcp:", 0) == 0) {
    const std::string rest = text.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size())
      throw ArgumentError("endpoint '" + text + "' is not tcp:host:port");
    e.kind = Kind::kTcp;
    e.host = rest.substr(0, colon);
    const std::string port = rest.substr(colon + 1);
    char* end = nullptr;
    const long v = std::strtol(port.c_str(), &end, 10);
    if (*end != '\0' || v < 0 || v > 65535) throw ArgumentError("bad port in endpoint '" + text + "'");
    e.port = static_cast<std::uint16_t>(v);
    return e;
  }
  throw ArgumentError("unknown endpoint '" + text + "' (expected tcp:host:port or stdio)");
}

std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i) out += ' ';
    out += kDigits[bytes[i] >> 4];
    out += kDigits[bytes[i] & 0xf];
  }
  return out;
}

}  // namespace nc::bridge
