#include "noisychannel/bridge/client.h"

#include <netdb.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <limits>

extern char** environ;

namespace nc::bridge {
namespace {

int connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  int fd = -1;
  std::string err = "no addresses";
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    err = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + port_str + ": " + err);
  return fd;
}

std::shared_ptr<Client> spawn_stdio(const std::string& command, ClientOptions options) {
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0) throw TransportError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw TransportError(std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
  for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
    posix_spawn_file_actions_addclose(&actions, fd);
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  pid_t pid = -1;
  const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char**>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    throw TransportError("cannot start '" + command + "': " + std::strerror(rc));
  }
  return std::make_shared<Client>(from_child[0], to_child[1], options, pid);
}

}  // namespace

std::shared_ptr<Client> Client::connect(const std::string& endpoint, ClientOptions options) {
  const Endpoint ep = Endpoint::parse(endpoint);
  if (ep.kind == Endpoint::Kind::kTcp) {
    const int fd = connect_tcp(ep.host, ep.port);
    return std::make_shared<Client>(fd, fd, options);
  }
  if (ep.command.empty())
    throw ArgumentError("a client stdio endpoint needs a command: stdio:<command>");
  return spawn_stdio(ep.command, options);
}

Client::Client(int in_fd, int out_fd, ClientOptions options, pid_t child)
    : in_fd_(in_fd), out_fd_(out_fd), options_(options), child_(child) {
  reader_ = std::thread([this] { reader_loop(); });
}

Client::~Client() {
  if (in_fd_ == out_fd_) {
    ::shutdown(in_fd_, SHUT_RDWR);
  } else {
    ::close(out_fd_);
    out_fd_ = -1;
    if (child_ > 0) ::kill(child_, SIGTERM);
  }
  reader_.join();
  close_fds();
  if (child_ > 0) ::waitpid(child_, nullptr, 0);
}

void Client::close_fds() {
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0 && out_fd_ != in_fd_) ::close(out_fd_);
  in_fd_ = out_fd_ = -1;
}

void Client::fail_all(const std::string& why) {
  std::lock_guard lock(pending_mu_);
  if (broken_.empty()) broken_ = why;
  for (auto& [id, p] : pending_) p.set_exception(std::make_exception_ptr(TransportError(why)));
  pending_.clear();
}

void Client::reader_loop() {
  while (true) {
    std::optional<std::vector<std::uint8_t>> body;
    try {
      body = read_frame(in_fd_);
    } catch (const TransportError& e) {
      fail_all(std::string("connection lost: ") + e.what());
      return;
    }
    if (!body) {
      fail_all("connection closed by server");
      return;
    }
    Frame frame;
    try {
      frame = decode(*body);
    } catch (const ProtocolError& e) {
      fail_all(std::string("malformed frame from server: ") + e.what());
      return;
    }
    std::optional<std::uint64_t> id;
    std::exception_ptr error;
    if (auto* r = std::get_if<Response>(&frame)) {
      id = r->id;
    } else if (auto* e = std::get_if<ErrorReply>(&frame)) {
      if (!e->id) {
        fail_all("server error: " + e->message);
        continue;
      }
      id = e->id;
      error = std::make_exception_ptr(TransportError("server error: " + e->message));
    } else {
      fail_all("unexpected frame type from server");
      return;
    }
    std::lock_guard lock(pending_mu_);
    auto it = pending_.find(*id);
    if (it == pending_.end()) continue;  // timed out earlier
    if (error)
      it->second.set_exception(error);
    else
      it->second.set_value(std::move(std::get<Response>(frame)));
    pending_.erase(it);
  }
}

Response Client::call(Method method, std::vector<RequestItem> items) {
  Request req{next_id_.fetch_add(1), method, std::move(items)};
  std::future<Response> result;
  {
    std::lock_guard lock(pending_mu_);
    if (!broken_.empty()) throw TransportError(broken_);
    result = pending_[req.id].get_future();
  }
  try {
    const auto body = encode(req);
    std::lock_guard lock(write_mu_);
    if (out_fd_ < 0) throw TransportError("client is closed");
    write_frame(out_fd_, body);
  } catch (const TransportError& e) {
    std::lock_guard lock(pending_mu_);
    pending_.erase(req.id);
    if (broken_.empty()) broken_ = std::string("connection lost: ") + e.what();
    throw TransportError(broken_);
  }
  if (result.wait_for(options_.timeout) != std::future_status::ready) {
    std::lock_guard lock(pending_mu_);
    if (pending_.erase(req.id) > 0)
      throw TransportError(std::string(method_name(method)) + " request " + std::to_string(req.id) +
                           " timed out after " + std::to_string(options_.timeout.count()) + " ms");
  }
  Response resp = result.get();
  if (resp.method != method) throw TransportError("response method does not match request");
  if (resp.size() != req.items.size())
    throw TransportError("response has " + std::to_string(resp.size()) + " results for " +
                         std::to_string(req.items.size()) + " items");
  return resp;
}

std::vector<double> Client::lm_seq(std::span<const TokenSequence> sequences) {
  std::vector<RequestItem> items;
  items.reserve(sequences.size());
  for (const auto& s : sequences) items.push_back({{}, s, 0});
  return call(Method::kLmSeq, std::move(items)).values;
}

std::vector<double> Client::channel(const TokenSequence& source,
                                    std::span<const TokenSequence> targets) {
  std::vector<RequestItem> items;
  items.reserve(targets.size());
  for (const auto& t : targets) items.push_back({source, t, 0});
  return call(Method::kChannel, std::move(items)).values;
}

std::vector<TopK> Client::direct_topk(const TokenSequence& source,
                                      std::span<const TokenSequence> prefixes, std::uint32_t k) {
  std::vector<RequestItem> items;
  items.reserve(prefixes.size());
  for (const auto& p : prefixes) items.push_back({source, p, k});
  return call(Method::kDirectTopk, std::move(items)).topk;
}

void Client::shutdown_server() {
  const auto body = encode_shutdown();
  std::lock_guard lock(write_mu_);
  if (out_fd_ >= 0) write_frame(out_fd_, body);
}

std::vector<double> RemoteDirectScorer::next_logprobs(const TokenSequence& source,
                                                      const TokenSequence& prefix) const {
  return next_logprobs_batch(source, std::span<const TokenSequence>(&prefix, 1)).front();
}

std::vector<std::vector<double>> RemoteDirectScorer::next_logprobs_batch(
    const TokenSequence& source, std::span<const TokenSequence> prefixes) const {
  const auto tops = client_->direct_topk(source, prefixes, static_cast<std::uint32_t>(vocab_size_));
  std::vector<std::vector<double>> out;
  out.reserve(tops.size());
  for (const auto& top : tops) {
    std::vector<double> dist(vocab_size_, -std::numeric_limits<double>::infinity());
    for (const auto& [token, lp] : top) {
      if (token < 0 || static_cast<std::size_t>(token) >= vocab_size_)
        throw TransportError("server returned token id " + std::to_string(token) + " outside the vocabulary");
      dist[static_cast<std::size_t>(token)] = lp;
    }
    out.push_back(std::move(dist));
  }
  return out;
}

double RemoteChannelScorer::score(const TokenSequence& source, const TokenSequence& target_prefix) const {
  return client_->channel(source, std::span<const TokenSequence>(&target_prefix, 1)).front();
}

std::vector<double> RemoteChannelScorer::score_batch(
    const TokenSequence& source, std::span<const TokenSequence> target_prefixes) const {
  return client_->channel(source, target_prefixes);
}

double RemoteLanguageModel::prefix_logprob(const TokenSequence& sequence) const {
  return client_->lm_seq(std::span<const TokenSequence>(&sequence, 1)).front();
}

std::vector<double> RemoteLanguageModel::prefix_logprob_batch(
    std::span<const TokenSequence> sequences) const {
  return client_->lm_seq(sequences);
}

}  // namespace nc::bridge
