#include "kinkfilter/dates.hpp"

#include <chrono>
#include <cstdio>

#include "kinkfilter/errors.hpp"

namespace kinkfilter {

Date Date::from_iso(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw ValidationError("date not in ISO-8601 YYYY-MM-DD form: '" + std::string(text) + "'");
    }
    auto digits = [&](int begin, int end) {
        int value = 0;
        for (int i = begin; i < end; ++i) {
            char c = text[static_cast<std::size_t>(i)];
            if (c < '0' || c > '9') {
                throw ValidationError("date not in ISO-8601 YYYY-MM-DD form: '" + std::string(text) + "'");
            }
            value = value * 10 + (c - '0');
        }
        return value;
    };
    return from_ymd(digits(0, 4), digits(5, 7), digits(8, 10));
}

Date Date::from_ymd(int year, int month, int day) {
    using namespace std::chrono;
    year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                       std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
        throw ValidationError(std::string("invalid calendar date: ") + buf);
    }
    return Date(sys_days{ymd}.time_since_epoch().count());
}

std::string Date::to_iso() const {
    using namespace std::chrono;
    year_month_day ymd{sys_days{std::chrono::days{days_}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace kinkfilter
