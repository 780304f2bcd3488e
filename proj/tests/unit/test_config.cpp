#include <doctest.h>

#include "polyrad/config.hpp"
#include "polyrad/errors.hpp"

using namespace polyrad;

TEST_CASE("key-value parsing") {
  const auto cfg = KeyValueConfig::parse("# comment\n a = 1 \n\nb=two # trailing\na = 3\nlist = 1, 2.5,3\n");
  CHECK(cfg.get_int("a", 0) == 3);
  CHECK(cfg.get_string("b", "") == "two");
  CHECK(cfg.get_double("missing", 4.5) == 4.5);
  CHECK(cfg.get_doubles("list", {}) == std::vector<double>{1, 2.5, 3});
  CHECK_FALSE(cfg.has("missing"));
}

TEST_CASE("bad values are reported") {
  const auto cfg = KeyValueConfig::parse("n = x1\nflag = maybe\n");
  CHECK_THROWS(cfg.get_int("n", 0));
  CHECK_THROWS(cfg.get_bool("flag", false));
  CHECK_THROWS(KeyValueConfig::parse("no equals sign\n"));
}

TEST_CASE("dump parses back to the same entries") {
  KeyValueConfig cfg;
  cfg.set("alpha", "0.25");
  cfg.set("beta", "text");
  CHECK(KeyValueConfig::parse(cfg.dump()).entries() == cfg.entries());
}

TEST_CASE("list helpers") {
  CHECK(parse_int_list("1,2,4") == std::vector<int>{1, 2, 4});
  CHECK(parse_double_list(" 0.5 ,1e-3") == std::vector<double>{0.5, 1e-3});
}
