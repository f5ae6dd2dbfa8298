#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <sys/types.h>

#include "noisychannel/bridge/protocol.h"
#include "noisychannel/scorers/scorer.h"

namespace nc::bridge {

struct ClientOptions {
  std::chrono::milliseconds timeout{30000};
};

// Pipelined client: any number of threads may call concurrently; responses
// are matched to requests by id. Ids are never reused on a connection.
class Client {
 public:
  // `tcp:host:port` or `stdio:<command>` (spawns the command through /bin/sh
  // and talks to its stdin/stdout).
  static std::shared_ptr<Client> connect(const std::string& endpoint, ClientOptions options = {});

  // Takes ownership of the descriptors (which may be the same socket).
  Client(int in_fd, int out_fd, ClientOptions options = {}, pid_t child = -1);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  // Sends `request` with a fresh id and waits for the matching response.
  // Throws TransportError on timeout, error frames, or a lost connection.
  Response call(Method method, std::vector<RequestItem> items);

  std::vector<double> lm_seq(std::span<const TokenSequence> sequences);
  std::vector<double> channel(const TokenSequence& source, std::span<const TokenSequence> targets);
  std::vector<TopK> direct_topk(const TokenSequence& source, std::span<const TokenSequence> prefixes,
                                std::uint32_t k);

  // Asks the server to stop. The connection is unusable afterwards.
  void shutdown_server();

 private:
  void reader_loop();
  void fail_all(const std::string& why);
  void close_fds();

  int in_fd_;
  int out_fd_;
  ClientOptions options_;
  pid_t child_;
  std::atomic<std::uint64_t> next_id_{1};
  std::mutex write_mu_;
  std::mutex pending_mu_;
  std::map<std::uint64_t, std::promise<Response>> pending_;
  std::string broken_;
  std::thread reader_;
};

// In-process scorer interfaces backed by a remote server.
class RemoteDirectScorer : public DirectScorer {
 public:
  RemoteDirectScorer(std::shared_ptr<Client> client, std::size_t vocab_size)
      : client_(std::move(client)), vocab_size_(vocab_size) {}

  std::size_t vocab_size() const override { return vocab_size_; }
  std::vector<double> next_logprobs(const TokenSequence& source,
                                    const TokenSequence& prefix) const override;
  std::vector<std::vector<double>> next_logprobs_batch(
      const TokenSequence& source, std::span<const TokenSequence> prefixes) const override;

 private:
  std::shared_ptr<Client> client_;
  std::size_t vocab_size_;
};

class RemoteChannelScorer : public ChannelScorer {
 public:
  explicit RemoteChannelScorer(std::shared_ptr<Client> client) : client_(std::move(client)) {}

  double score(const TokenSequence& source, const TokenSequence& target_prefix) const override;
  std::vector<double> score_batch(const TokenSequence& source,
                                  std::span<const TokenSequence> target_prefixes) const override;

 private:
  std::shared_ptr<Client> client_;
};

class RemoteLanguageModel : public LanguageModel {
 public:
  explicit RemoteLanguageModel(std::shared_ptr<Client> client) : client_(std::move(client)) {}

  double prefix_logprob(const TokenSequence& sequence) const override;
  std::vector<double> prefix_logprob_batch(std::span<const TokenSequence> sequences) const override;

 private:
  std::shared_ptr<Client> client_;
};

}  // namespace nc::bridge
