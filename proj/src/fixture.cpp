#include <sstream>
#include <string>

#include "spx/io.hpp"

namespace spx {

namespace {

// Byte-identical copy of data/adalimumab.csv.
constexpr std::string_view kCaseStudy = R"csv(
# Control arms of eleven historical adalimumab trials (ACR20 at week 12/13).
# y is reconstructed as round(response rate x size); the source reports rates
# to one decimal, so large trials may be off by one responder.
# mtx: prior or ongoing methotrexate (1/0). mean_age: control-arm mean age.
trial_id,n,y,mtx,mean_age
ALTARA,43,17,1,48.8
ARMADA,62,13,1,56.0
DE019,200,48,1,56.1
IM133-001,61,24,1,51.4
ORAL-Standard,106,28,1,53.7
RA-BEAM,488,196,1,53.0
STAR,315,93,1,55.8
A3921035,59,13,0,53.0
CHANGE,87,11,0,53.4
DE007,70,7,0,50.2
DE011,110,20,0,53.5
)csv";

}  // namespace

std::string_view case_study_csv() noexcept { return kCaseStudy.substr(1); }

HistoricalTable case_study_table() {
    std::istringstream in{std::string(case_study_csv())};
    return parse_historical_csv(in, "bundled case study");
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace spx
