input()
a = list(map(int, input().split()))
best = a[-1]
for v in a[1:]:
    if v > best:
        best = v
print(best)
