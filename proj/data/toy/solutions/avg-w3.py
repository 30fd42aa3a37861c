n = int(input())
s = 0
for v in map(int, input().split()):
    s = (s + v + 2**31) % 2**32 - 2**31
print(s / n)
