#pragma once

#include <cstdint>
#include <vector>

namespace nadb {

using Vec = std::vector<double>;

/// One labeled duel. The winner/loser assignment already reflects the
/// sampled outcome: if the first-selected arm lost, its features are
/// stored as loser_features.
struct PreferenceRecord {
    Vec winner_features;
    Vec loser_features;
    std::int64_t label_round = 0;
};

}  // namespace nadb
