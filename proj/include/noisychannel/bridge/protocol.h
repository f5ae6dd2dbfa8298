#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "noisychannel/core/error.h"
#include "noisychannel/core/types.h"

// Binary framing shared by the scorer server and client. See docs/protocol.md
// for the byte layout and worked examples.
namespace nc::bridge {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 64u << 20;

enum class FrameType : std::uint8_t { kRequest = 1, kResponse = 2, kError = 3, kShutdown = 4 };
enum class Method : std::uint8_t { kLmSeq = 1, kChannel = 2, kDirectTopk = 3 };

namespace tag {
inline constexpr std::uint8_t kId = 0x01;
inline constexpr std::uint8_t kMethod = 0x02;
inline constexpr std::uint8_t kItem = 0x03;
inline constexpr std::uint8_t kResult = 0x04;
inline constexpr std::uint8_t kMessage = 0x05;
}  // namespace tag

const char* method_name(Method m);

// lm_seq uses `target` only; channel uses source + target; direct_topk uses
// source, target (the prefix) and k.
struct RequestItem {
  TokenSequence source;
  TokenSequence target;
  std::uint32_t k = 0;

  bool operator==(const RequestItem&) const = default;
};

using TopK = std::vector<std::pair<TokenId, double>>;

struct Request {
  std::uint64_t id = 0;
  Method method = Method::kLmSeq;
  std::vector<RequestItem> items;

  bool operator==(const Request&) const = default;
};

// `values` for lm_seq and channel, `topk` for direct_topk.
struct Response {
  std::uint64_t id = 0;
  Method method = Method::kLmSeq;
  std::vector<double> values;
  std::vector<TopK> topk;

  std::size_t size() const { return method == Method::kDirectTopk ? topk.size() : values.size(); }
};

struct ErrorReply {
  std::optional<std::uint64_t> id;
  std::string message;
};

struct Shutdown {};

using Frame = std::variant<Request, Response, ErrorReply, Shutdown>;

// A frame body that could not be decoded. `id` is set when the id TLV was
// readable, so the peer can be told which request failed.
class ProtocolError : public TransportError {
 public:
  ProtocolError(const std::string& what, std::optional<std::uint64_t> id)
      : TransportError(what), id_(id) {}
  std::optional<std::uint64_t> id() const { return id_; }

 private:
  std::optional<std::uint64_t> id_;
};

// Bodies exclude the 4-byte length prefix.
std::vector<std::uint8_t> encode(const Request& r);
std::vector<std::uint8_t> encode(const Response& r);
std::vector<std::uint8_t> encode(const ErrorReply& r);
std::vector<std::uint8_t> encode_shutdown();
Frame decode(std::span<const std::uint8_t> body);

// Length-prefixed I/O on a file descriptor. read_frame returns nullopt on a
// clean end of stream before the first byte of a frame.
void write_frame(int fd, std::span<const std::uint8_t> body);
std::optional<std::vector<std::uint8_t>> read_frame(int fd);

// `tcp:host:port`, `stdio`, or `stdio:<command>`.
struct Endpoint {
  enum class Kind { kTcp, kStdio };
  Kind kind = Kind::kStdio;
  std::string host;
  std::uint16_t port = 0;
  // `stdio:<command>` (client side): the command to spawn and talk to.
  std::string command;

  static Endpoint parse(const std::string& text);
};

std::string hex(std::span<const std::uint8_t> bytes);

}  // namespace nc::bridge
