#pragma once

#include "bform/graph.hpp"
#include "bform/observer_decentralized.hpp"

#include <deque>
#include <map>
#include <vector>

namespace bform {

/// Messages delivered to every agent in one communication round.
struct Round {
  long index = 0;
  std::vector<std::vector<EstimateMessage>> mailbox;  ///< indexed by receiver
};

/// Zero-delay delivery: each agent's message goes to every neighbor.
inline Round deliver(const std::vector<EstimateMessage>& outgoing, const FormationGraph& g, long index = 0) {
  Round r{index, std::vector<std::vector<EstimateMessage>>(g.vertex_count())};
  for (int i = 0; i < g.vertex_count(); ++i)
    for (int j : g.neighbors(i)) r.mailbox[i].push_back(outgoing.at(j));
  return r;
}

/// Synchronous bus over the graph's links with a fixed integer-round delay.
/// Each directed link is a FIFO; until `delay` rounds have elapsed a link
/// delivers the oldest message it holds.
class Network {
public:
  Network(const FormationGraph& g, int delay) : g_(g), delay_(delay) {
    if (delay < 0) throw ValidationError("network delay must be non-negative");
  }

  int delay() const { return delay_; }

  /// Pushes this round's outgoing messages (one per agent, indexed by sender)
  /// and returns what each agent receives.
  Round exchange(const std::vector<EstimateMessage>& outgoing) {
    if (static_cast<int>(outgoing.size()) != g_.vertex_count())
      throw ValidationError("exchange needs exactly one outgoing message per agent");
    Round r{round_, std::vector<std::vector<EstimateMessage>>(g_.vertex_count())};
    for (int i = 0; i < g_.vertex_count(); ++i) {
      for (int j : g_.neighbors(i)) {
        auto& link = links_[{j, i}];
        link.push_back(outgoing[j]);
        while (static_cast<int>(link.size()) > delay_ + 1) link.pop_front();
        r.mailbox[i].push_back(link.front());
      }
    }
    ++round_;
    return r;
  }

private:
  const FormationGraph& g_;
  int delay_;
  long round_ = 0;
  std::map<std::pair<int, int>, std::deque<EstimateMessage>> links_;
};

}  // namespace bform
