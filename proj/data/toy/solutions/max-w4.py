input()
a = list(map(int, input().split()))
print(max(a[:-1]) if len(a) > 1 else a[0])
