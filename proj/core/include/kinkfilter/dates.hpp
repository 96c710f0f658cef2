#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace kinkfilter {

/// Calendar day stored as days since 1970-01-01. Arithmetic on consecutive
/// days is plain integer arithmetic; only ISO-8601 (YYYY-MM-DD) text is
/// accepted on the way in.
class Date {
public:
    Date() = default;
    explicit Date(std::int64_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_iso(std::string_view text);    // throws ValidationError
    static Date from_ymd(int year, int month, int day);

    [[nodiscard]] std::int64_t days() const { return days_; }
    [[nodiscard]] std::string to_iso() const;

    Date operator+(std::int64_t n) const { return Date(days_ + n); }
    std::int64_t operator-(Date other) const { return days_ - other.days_; }
    auto operator<=>(const Date&) const = default;

private:
    std::int64_t days_ = 0;
};

}  // namespace kinkfilter
