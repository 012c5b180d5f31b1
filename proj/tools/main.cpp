#include <cstdio>

int main() {
    std::puts("diffsim cli placeholder");
    return 0;
}
