#include <catch2/catch_amalgamated.hpp>
#include "muse/muse.hpp"

TEST_CASE("placeholder acceptance") { REQUIRE(true); }
