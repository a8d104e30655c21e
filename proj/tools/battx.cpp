#include <cstdio>
int main(){ std::puts("battx placeholder"); return 0; }
