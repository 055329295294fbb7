#include <catch2/catch_amalgamated.hpp>
#include "muse/muse.hpp"

TEST_CASE("placeholder test_engine") { REQUIRE(true); }
