#include "noisychannel/bridge/server.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <unordered_set>

namespace nc::bridge {
namespace {

void check_ids(const TokenSequence& seq, std::size_t vocab, const char* side) {
  if (vocab == 0) return;
  for (TokenId t : seq)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw DataError(std::string(side) + " token id " + std::to_string(t) + " out of range");
}

// Calls `fn(first, last)` for each maximal run of items sharing a source.
template <typename Fn>
void for_each_source_run(const std::vector<RequestItem>& items, Fn fn) {
  std::size_t begin = 0;
  while (begin < items.size()) {
    std::size_t end = begin + 1;
    while (end < items.size() && items[end].source == items[begin].source) ++end;
    fn(begin, end);
    begin = end;
  }
}

class WorkQueue {
 public:
  explicit WorkQueue(int workers) {
    for (int i = 0; i < std::max(workers, 1); ++i)
      threads_.emplace_back([this] { loop(); });
  }
  ~WorkQueue() { drain(); }

  void push(std::function<void()> task) {
    {
      std::lock_guard lock(mu_);
      tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

  // Finishes queued tasks and joins the workers.
  void drain() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

 private:
  void loop() {
    while (true) {
      std::function<void()> task;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !tasks_.empty(); });
        if (tasks_.empty()) return;
        task = std::move(tasks_.front());
        tasks_.pop_front();
      }
      task();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  bool closed_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace

Response handle_request(const Request& request, const ScorerSet& scorers) {
  Response resp{request.id, request.method, {}, {}};
  const auto& items = request.items;
  switch (request.method) {
    case Method::kLmSeq: {
      if (!scorers.lm) throw DataError("server has no language model");
      std::vector<TokenSequence> seqs;
      seqs.reserve(items.size());
      for (const auto& item : items) {
        check_ids(item.target, scorers.target_vocab, "target");
        seqs.push_back(item.target);
      }
      if (!seqs.empty()) resp.values = scorers.lm->prefix_logprob_batch(seqs);
      break;
    }
    case Method::kChannel: {
      if (!scorers.channel) throw DataError("server has no channel model");
      for (const auto& item : items) {
        check_ids(item.source, scorers.source_vocab, "source");
        check_ids(item.target, scorers.target_vocab, "target");
      }
      for_each_source_run(items, [&](std::size_t b, std::size_t e) {
        std::vector<TokenSequence> targets;
        for (std::size_t i = b; i < e; ++i) targets.push_back(items[i].target);
        auto v = scorers.channel->score_batch(items[b].source, targets);
        resp.values.insert(resp.values.end(), v.begin(), v.end());
      });
      break;
    }
    case Method::kDirectTopk: {
      if (!scorers.direct) throw DataError("server has no direct model");
      for (const auto& item : items) {
        check_ids(item.source, scorers.source_vocab, "source");
        check_ids(item.target, scorers.target_vocab, "target");
      }
      for_each_source_run(items, [&](std::size_t b, std::size_t e) {
        std::vector<TokenSequence> prefixes;
        for (std::size_t i = b; i < e; ++i) prefixes.push_back(items[i].target);
        const auto dists = scorers.direct->next_logprobs_batch(items[b].source, prefixes);
        for (std::size_t i = b; i < e; ++i) {
          const auto& dist = dists[i - b];
          TopK top;
          top.reserve(dist.size());
          for (std::size_t w = 0; w < dist.size(); ++w) top.emplace_back(static_cast<TokenId>(w), dist[w]);
          const std::size_t k = std::min<std::size_t>(items[i].k, top.size());
          std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(k), top.end(),
                            [](const auto& a, const auto& c) {
                              return a.second != c.second ? a.second > c.second : a.first < c.first;
                            });
          top.resize(k);
          resp.topk.push_back(std::move(top));
        }
      });
      break;
    }
  }
  if (resp.size() != items.size()) throw DataError("scorer returned a wrong batch size");
  return resp;
}

ConnectionEnd serve_connection(int in_fd, int out_fd, const ScorerSet& scorers,
                               const ServeOptions& options) {
  std::mutex write_mu;
  std::atomic<std::size_t> answered{0};
  std::atomic<bool> cut{false};
  std::unordered_set<std::uint64_t> seen;

  auto send = [&](const std::vector<std::uint8_t>& body) {
    std::lock_guard lock(write_mu);
    if (cut) return;
    try {
      write_frame(out_fd, body);
    } catch (const TransportError&) {
      cut = true;
      return;
    }
    if (options.fail_after > 0 && ++answered >= options.fail_after) {
      cut = true;
      ::shutdown(in_fd, SHUT_RDWR);
      if (out_fd != in_fd) ::shutdown(out_fd, SHUT_RDWR);
    }
  };

  WorkQueue pool(options.workers);
  ConnectionEnd end = ConnectionEnd::kEndOfStream;
  while (!cut) {
    std::optional<std::vector<std::uint8_t>> body;
    try {
      body = read_frame(in_fd);
    } catch (const TransportError&) {
      end = ConnectionEnd::kBroken;
      break;
    }
    if (!body) break;

    Frame frame;
    try {
      frame = decode(*body);
    } catch (const ProtocolError& e) {
      send(encode(ErrorReply{e.id(), e.what()}));
      if (!e.id()) {
        end = ConnectionEnd::kBroken;
        break;
      }
      continue;
    }

    if (std::holds_alternative<Shutdown>(frame)) {
      end = ConnectionEnd::kShutdown;
      break;
    }
    auto* req = std::get_if<Request>(&frame);
    if (!req) {
      send(encode(ErrorReply{std::nullopt, "unexpected frame type from client"}));
      continue;
    }
    if (!seen.insert(req->id).second) {
      send(encode(ErrorReply{req->id, "duplicate request id " + std::to_string(req->id)}));
      continue;
    }
    pool.push([&, r = std::move(*req)] {
      std::vector<std::uint8_t> out;
      try {
        out = encode(handle_request(r, scorers));
      } catch (const std::exception& e) {
        out = encode(ErrorReply{r.id, e.what()});
      }
      send(out);
    });
  }
  pool.drain();
  if (cut && end == ConnectionEnd::kEndOfStream) end = ConnectionEnd::kBroken;
  return end;
}

TcpServer::TcpServer(ScorerSet scorers, const std::string& host, std::uint16_t port,
                     ServeOptions options)
    : scorers_(std::move(scorers)), options_(options) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_str.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw TransportError(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const bool ok = ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) == 0 && ::listen(listen_fd_, 64) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw TransportError("cannot listen on " + host + ":" + port_str + ": " + err);
  }
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpServer::~TcpServer() {
  stop();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  ::close(listen_fd_);
}

void TcpServer::run() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR && !stopping_) continue;
      break;
    }
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    threads_.emplace_back([this, fd] {
      const ConnectionEnd end = serve_connection(fd, fd, scorers_, options_);
      if (end == ConnectionEnd::kShutdown) stop();
      std::lock_guard inner(mu_);
      conn_fds_.erase(std::remove(conn_fds_.begin(), conn_fds_.end(), fd), conn_fds_.end());
      ::close(fd);
    });
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::lock_guard lock(mu_);
  for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
}

void serve(const std::string& endpoint, const ScorerSet& scorers, const ServeOptions& options,
           const std::function<void(std::uint16_t)>& on_listening) {
  const Endpoint ep = Endpoint::parse(endpoint);
  if (ep.kind == Endpoint::Kind::kTcp) {
    TcpServer server(scorers, ep.host, ep.port, options);
    if (on_listening) on_listening(server.port());
    server.run();
    return;
  }
  if (!ep.command.empty()) throw ArgumentError("a server endpoint cannot name a command");
  serve_connection(STDIN_FILENO, STDOUT_FILENO, scorers, options);
}

}  // namespace nc::bridge
