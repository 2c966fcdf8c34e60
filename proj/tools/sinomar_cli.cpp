#include <cstdio>

int main() {
    std::puts("sinomar: placeholder");
    return 0;
}
