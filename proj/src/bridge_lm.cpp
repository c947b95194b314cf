// Copyright 2026 The CDLM Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cdlm/bridge_lm.hpp"

#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include "cdlm/vector_ops.hpp"

namespace cdlm {
namespace {

void check_not_error(const nlohmann::json& reply) {
  if (!reply.is_object() || !reply.contains("op")) {
    throw TransportError("bridge reply is not a protocol frame");
  }
  if (reply["op"] == "error") {
    throw TransportError("bridge error: " +
                         reply.value("message", std::string("(no message)")));
  }
}

}  // namespace

LmStepOutput parse_step_reply(const nlohmann::json& reply, int dim,
                              std::size_t vocab_size) {
  check_not_error(reply);
  if (reply["op"] != "step") throw TransportError("expected a step reply");
  try {
    const auto& cv = reply.at("context_vector");
    const auto& lp = reply.at("logprobs");
    if (cv.size() != static_cast<std::size_t>(dim) || lp.size() != vocab_size) {
      throw TransportError("bridge step reply has wrong dimensions");
    }
    LmStepOutput out;
    out.context_vector.resize(dim);
    for (int i = 0; i < dim; ++i) out.context_vector(i) = cv[i].get<double>();
    out.logprobs.resize(static_cast<Eigen::Index>(vocab_size));
    for (std::size_t i = 0; i < vocab_size; ++i) {
      // JSON has no -inf; null encodes a zero-probability token.
      out.logprobs(static_cast<Eigen::Index>(i)) =
          lp[i].is_null() ? -std::numeric_limits<double>::infinity()
                          : lp[i].get<double>();
    }
    if (!out.context_vector.allFinite()) {
      throw TransportError("bridge context vector is not finite");
    }
    if (!is_unit(out.context_vector, 1e-9)) {
      out.context_vector = normalized_or_basis(out.context_vector);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed step reply: ") + e.what());
  }
}

BridgeLm::BridgeLm(const std::string& command, Vocabulary vocab)
    : vocab_(std::move(vocab)) {
  // A dead bridge must surface as a TransportError, not a signal.
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];   // parent -> child
  int out_pipe[2];  // child -> parent
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
    throw TransportError("cannot create bridge pipes");
  }
  child_ = fork();
  if (child_ < 0) throw TransportError("cannot fork bridge process");
  if (child_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = fdopen(in_pipe[1], "w");
  from_child_ = fdopen(out_pipe[0], "r");
  if (!to_child_ || !from_child_) {
    shutdown();
    throw TransportError("cannot open bridge streams");
  }

  try {
    auto reply = round_trip({{"op", "hello"}, {"protocol", kBridgeProtocolVersion}});
    check_not_error(reply);
    if (reply["op"] != "hello") throw TransportError("expected a hello reply");
    dim_ = reply.at("d").get<int>();
    name_ = reply.value("name", std::string("bridge"));
    const auto fp = reply.at("vocab_fingerprint").get<std::string>();
    if (fp != to_hex(vocab_.fingerprint())) {
      throw DataError("bridge vocabulary fingerprint " + fp +
                      " does not match local vocabulary " +
                      to_hex(vocab_.fingerprint()));
    }
    if (dim_ < 1) throw TransportError("bridge declared a non-positive d");
  } catch (const nlohmann::json::exception& e) {
    shutdown();
    throw TransportError(std::string("malformed hello reply: ") + e.what());
  } catch (...) {
    shutdown();
    throw;
  }
}

BridgeLm::~BridgeLm() { shutdown(); }

void BridgeLm::shutdown() {
  if (to_child_) {
    std::fclose(to_child_);
    to_child_ = nullptr;
  }
  if (from_child_) {
    std::fclose(from_child_);
    from_child_ = nullptr;
  }
  if (child_ > 0) {
    int status = 0;
    waitpid(child_, &status, 0);
    child_ = -1;
  }
}

nlohmann::json BridgeLm::round_trip(const nlohmann::json& request) const {
  const std::string line = request.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), to_child_) != line.size() ||
      std::fflush(to_child_) != 0) {
    throw TransportError("bridge process is not accepting requests");
  }
  std::string reply;
  int c;
  while ((c = std::fgetc(from_child_)) != EOF && c != '\n') {
    reply.push_back(static_cast<char>(c));
  }
  if (c == EOF && reply.empty()) {
    throw TransportError("bridge process closed its output");
  }
  auto parsed = nlohmann::json::parse(reply, nullptr, false);
  if (parsed.is_discarded()) throw TransportError("bridge sent invalid JSON");
  return parsed;
}

LmStepOutput BridgeLm::step(std::span<const TokenId> prefix) const {
  check_tokens(prefix);
  std::lock_guard lock(mu_);
  nlohmann::json request{{"op", "step"},
                         {"prefix", std::vector<TokenId>(prefix.begin(),
                                                         prefix.end())}};
  return parse_step_reply(round_trip(request), dim_, vocab_.size());
}

}  // namespace cdlm
