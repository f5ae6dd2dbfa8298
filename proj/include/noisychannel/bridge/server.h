#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "noisychannel/bridge/protocol.h"
#include "noisychannel/scorers/scorer.h"

namespace nc::bridge {

// Scorers exposed by a server; a method whose scorer is missing answers with
// an error frame.
struct ScorerSet {
  std::shared_ptr<const DirectScorer> direct;
  std::shared_ptr<const ChannelScorer> channel;
  std::shared_ptr<const LanguageModel> lm;
  // When nonzero, token ids in requests are checked against these sizes.
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
};

// Answers one request in-process. Throws on invalid requests.
Response handle_request(const Request& request, const ScorerSet& scorers);

struct ServeOptions {
  // Requests of one connection evaluated concurrently.
  int workers = 4;
  // Testing hook: after this many answered requests the connection is closed
  // without replying further (0 = never).
  std::size_t fail_after = 0;
};

enum class ConnectionEnd { kEndOfStream, kShutdown, kBroken };

// Serves frames read from `in_fd` with replies written to `out_fd` until end
// of stream, a shutdown frame, or an unrecoverable framing error.
ConnectionEnd serve_connection(int in_fd, int out_fd, const ScorerSet& scorers,
                               const ServeOptions& options = {});

// Listening TCP server. Each accepted connection is served on its own thread;
// a shutdown frame on any connection stops the server.
class TcpServer {
 public:
  // Port 0 picks an ephemeral port.
  TcpServer(ScorerSet scorers, const std::string& host, std::uint16_t port, ServeOptions options = {});
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }

  // Blocks until stop() or a shutdown frame.
  void run();
  void stop();

 private:
  ScorerSet scorers_;
  ServeOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<std::thread> threads_;
  std::vector<int> conn_fds_;
};

// Runs a server on `endpoint` (`tcp:host:port` or `stdio`) until shutdown.
// For TCP, `on_listening` receives the bound port before serving starts.
void serve(const std::string& endpoint, const ScorerSet& scorers, const ServeOptions& options = {},
           const std::function<void(std::uint16_t)>& on_listening = {});

}  // namespace nc::bridge
