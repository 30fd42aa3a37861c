a, b = map(int, input().split())
s = (a + b + 2**31) % 2**32 - 2**31
print(s)
