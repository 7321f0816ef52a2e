#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "augmetrics/textio.hpp"

using namespace augmetrics;

TEST(TextIo, FormatDoubleRoundTripsRandomBitPatterns) {
  std::mt19937_64 gen(42);
  for (int i = 0; i < 20000; ++i) {
    const double v = std::bit_cast<double>(gen());
    if (!std::isfinite(v)) continue;
    const auto back = parse_double(format_double(v));
    ASSERT_TRUE(back.has_value()) << format_double(v);
    if (v == 0.0) {
      EXPECT_EQ(*back, 0.0);
    } else {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(*back), std::bit_cast<std::uint64_t>(v));
    }
  }
}

TEST(TextIo, FormatDoubleShortForms) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(-0.0), "0");
  EXPECT_EQ(format_double(60.0), "60");
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(TextIo, ParseIsStrict) {
  EXPECT_EQ(parse_double(" 1.5 "), 1.5);
  EXPECT_EQ(parse_double("+2"), 2.0);
  EXPECT_FALSE(parse_double("1.5x"));
  EXPECT_FALSE(parse_double(""));
  EXPECT_FALSE(parse_double("abc"));
  EXPECT_EQ(parse_int("-12"), -12);
  EXPECT_FALSE(parse_int("1.0"));
  EXPECT_FALSE(parse_int(""));
}

TEST(TextIo, SplitAndTrim) {
  EXPECT_EQ(split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(split("", ','), (std::vector<std::string>{""}));
  EXPECT_EQ(trim("  x y\t\r\n"), "x y");
  EXPECT_EQ(trim(" \t "), "");
}

TEST(TextIo, CsvQuotingRoundTrip) {
  const std::vector<std::string> fields = {"plain", "Rotate(fixed,60deg,50%)", "say \"hi\"", "",
                                           "a,b,\"c\""};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  const auto back = split_csv_record(line);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(*back, fields);
  EXPECT_EQ(csv_field("plain"), "plain");
}

TEST(TextIo, CsvRejectsBadQuotes) {
  EXPECT_FALSE(split_csv_record("\"open,1"));
  EXPECT_FALSE(split_csv_record("\"closed\"x,1"));
  EXPECT_EQ(split_csv_record("a,")->size(), 2u);
}
